//! Cross-graph residuals and their Jacobians.
//!
//! The transform `T` maps frame M into frame B and is parameterized as
//! `(tx, ty, yaw)`. Jacobian columns follow that order.

use nalgebra::{Matrix2, Matrix2x3, Vector2};

use crate::geometry::{wrap_angle, FrameTransform, PlaneCP};
use crate::graph::Room;

/// A vertical plane in the xy-plane: normal angle and signed offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPlane {
    pub angle: f64,
    pub dist: f64,
}

impl PlanarPlane {
    pub fn of(plane: &PlaneCP) -> Self {
        let n = plane.normal_xy();
        let len = n.norm();
        Self {
            angle: n.y.atan2(n.x),
            dist: plane.dist / len,
        }
    }

    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.angle.cos(), self.angle.sin())
    }
}

fn rotation_derivative(yaw: f64) -> Matrix2<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

pub fn room_center_residual(c_b: &Vector2<f64>, c_m: &Vector2<f64>, t: &FrameTransform) -> Vector2<f64> {
    c_b - t.apply_point2(c_m)
}

/// Jacobians with respect to `T` and to the M-side center.
pub fn room_center_jacobian(c_m: &Vector2<f64>, t: &FrameTransform) -> (Matrix2x3<f64>, Matrix2<f64>) {
    let dr = rotation_derivative(t.yaw) * c_m;
    let jt = Matrix2x3::new(-1.0, 0.0, -dr.x, 0.0, -1.0, -dr.y);
    (jt, -t.rotation())
}

pub fn room_merge_residual(rho_b: &Room, rho_m: &Room, t: &FrameTransform) -> Vector2<f64> {
    room_center_residual(&rho_b.center, &rho_m.center, t)
}

/// Sign that aligns the moved M normal with the B normal.
fn alignment(b: &PlanarPlane, moved: &Vector2<f64>) -> f64 {
    if moved.dot(&b.normal()) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `(angle between normals, offset difference)` after moving `m` into B and
/// flipping it to face the same way as `b`.
pub fn planar_surface_residual(b: &PlanarPlane, m: &PlanarPlane, t: &FrameTransform) -> Vector2<f64> {
    let n = t.rotate(&m.normal());
    let s = alignment(b, &n);
    let flip = if s < 0.0 { std::f64::consts::PI } else { 0.0 };
    let angle = wrap_angle(m.angle + t.yaw + flip - b.angle);
    let dist = s * (m.dist + t.translation.dot(&n)) - b.dist;
    Vector2::new(angle, dist)
}

/// Jacobians with respect to `T` and to the M-side `(angle, dist)`.
pub fn planar_surface_jacobian(b: &PlanarPlane, m: &PlanarPlane, t: &FrameTransform) -> (Matrix2x3<f64>, Matrix2<f64>) {
    let n = t.rotate(&m.normal());
    let s = alignment(b, &n);
    let perp = Vector2::new(-n.y, n.x);
    let d_yaw = s * t.translation.dot(&perp);
    let jt = Matrix2x3::new(0.0, 0.0, 1.0, s * n.x, s * n.y, d_yaw);
    let jm = Matrix2::new(1.0, 0.0, d_yaw, s);
    (jt, jm)
}

pub fn surface_merge_residual(pi_b: &PlaneCP, pi_m: &PlaneCP, t: &FrameTransform) -> Vector2<f64> {
    planar_surface_residual(&PlanarPlane::of(pi_b), &PlanarPlane::of(pi_m), t)
}

pub fn surface_merge_jacobian(pi_b: &PlaneCP, pi_m: &PlaneCP, t: &FrameTransform) -> Matrix2x3<f64> {
    planar_surface_jacobian(&PlanarPlane::of(pi_b), &PlanarPlane::of(pi_m), t).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FrameId;
    use crate::graph::RoomKind;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn room(id: &str, c: [f64; 2], frame: FrameId) -> Room {
        Room {
            id: id.into(),
            center: Vector2::from(c),
            kind: RoomKind::FourWall,
            surfaces: Vec::new(),
            frame,
        }
    }

    fn plane(angle: f64, d: f64, frame: FrameId) -> PlaneCP {
        PlaneCP::new(Vector3::new(angle.cos(), angle.sin(), 0.0), d, frame).unwrap()
    }

    #[test]
    fn room_residual_examples() {
        let t = FrameTransform::new(1.0, -2.0, 0.7);
        let c_m = Vector2::new(3.0, 1.0);
        let b = room("a", t.apply_point2(&c_m).into(), FrameId::B);
        let m = room("s", c_m.into(), FrameId::M);
        assert_abs_diff_eq!(room_merge_residual(&b, &m, &t).norm(), 0.0, epsilon = 1e-12);

        let b = room("a", [4.0, 6.0], FrameId::B);
        let m = room("s", [3.0, 4.0], FrameId::M);
        let r = room_merge_residual(&b, &m, &FrameTransform::identity());
        assert_abs_diff_eq!(r, Vector2::new(1.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn surface_residual_examples() {
        let t = FrameTransform::new(0.5, 1.5, 0.3);
        let pi_m = plane(0.4, 2.0, FrameId::M);
        let pi_b = t.transform_plane(&pi_m);
        assert_abs_diff_eq!(surface_merge_residual(&pi_b, &pi_m, &t).norm(), 0.0, epsilon = 1e-12);

        let rotated = plane(0.5, 2.0, FrameId::M);
        let r = surface_merge_residual(&pi_b, &rotated, &t);
        assert_abs_diff_eq!(r.x, 0.1, epsilon = 1e-12);

        let shifted = plane(0.4, 2.2, FrameId::M);
        let r = surface_merge_residual(&pi_b, &shifted, &t);
        assert_abs_diff_eq!(r, Vector2::new(0.0, 0.2), epsilon = 1e-12);
    }

    #[test]
    fn surface_residual_ignores_normal_sign() {
        let t = FrameTransform::new(-3.0, 1.0, 0.0);
        let pi_m = plane(0.0, 1.0, FrameId::M);
        // Same plane, written with the opposite normal.
        let pi_b = plane(std::f64::consts::PI, 2.0, FrameId::B);
        assert_abs_diff_eq!(surface_merge_residual(&pi_b, &pi_m, &t).norm(), 0.0, epsilon = 1e-12);
    }

    fn fd_columns<F: Fn(&[f64; 3]) -> Vector2<f64>>(f: F, x: [f64; 3]) -> Matrix2x3<f64> {
        let h = 1e-6;
        let mut jac = Matrix2x3::zeros();
        for k in 0..3 {
            let mut hi = x;
            let mut lo = x;
            hi[k] += h;
            lo[k] -= h;
            let mut diff = f(&hi) - f(&lo);
            if k == 2 {
                // Both components stay continuous for the step sizes used.
                diff.x = wrap_angle(diff.x);
            }
            jac.set_column(k, &(diff / (2.0 * h)));
        }
        jac
    }

    fn relative_ok(analytic: &Matrix2x3<f64>, numeric: &Matrix2x3<f64>) -> bool {
        analytic
            .iter()
            .zip(numeric.iter())
            .all(|(a, n)| (a - n).abs() <= 1e-5 * a.abs().max(n.abs()).max(1.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn room_jacobian_matches_finite_differences(
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, yaw in -3.0f64..3.0,
            cx in -10.0f64..10.0, cy in -10.0f64..10.0, bx in -10.0f64..10.0, by in -10.0f64..10.0,
        ) {
            let c_m = Vector2::new(cx, cy);
            let c_b = Vector2::new(bx, by);
            let t = FrameTransform::new(tx, ty, yaw);
            let (jt, _) = room_center_jacobian(&c_m, &t);
            let num = fd_columns(|x| room_center_residual(&c_b, &c_m, &FrameTransform::new(x[0], x[1], x[2])), [tx, ty, yaw]);
            prop_assert!(relative_ok(&jt, &num), "{jt} vs {num}");
        }

        #[test]
        fn surface_jacobian_matches_finite_differences(
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, yaw in -3.0f64..3.0,
            am in -3.1f64..3.1, dm in 0.0f64..10.0, da in -0.3f64..0.3, db in 0.0f64..10.0,
        ) {
            let m = PlanarPlane { angle: am, dist: dm };
            let b = PlanarPlane { angle: wrap_angle(am + yaw + da), dist: db };
            let t = FrameTransform::new(tx, ty, yaw);
            let (jt, jm) = planar_surface_jacobian(&b, &m, &t);
            let num = fd_columns(|x| planar_surface_residual(&b, &m, &FrameTransform::new(x[0], x[1], x[2])), [tx, ty, yaw]);
            prop_assert!(relative_ok(&jt, &num), "{jt} vs {num}");

            let h = 1e-6;
            let f = |a: f64, d: f64| planar_surface_residual(&b, &PlanarPlane { angle: a, dist: d }, &t);
            let col_a = (f(am + h, dm) - f(am - h, dm)) / (2.0 * h);
            let col_d = (f(am, dm + h) - f(am, dm - h)) / (2.0 * h);
            let num_m = Matrix2::from_columns(&[col_a, col_d]);
            for (a, n) in jm.iter().zip(num_m.iter()) {
                prop_assert!((a - n).abs() <= 1e-5 * a.abs().max(n.abs()).max(1.0));
            }
        }

        #[test]
        fn residual_matches_direct_formula(
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, yaw in -3.0f64..3.0,
            cx in -10.0f64..10.0, cy in -10.0f64..10.0, bx in -10.0f64..10.0, by in -10.0f64..10.0,
        ) {
            let (s, c) = yaw.sin_cos();
            let expect = Vector2::new(bx - (c * cx - s * cy + tx), by - (s * cx + c * cy + ty));
            let got = room_center_residual(&Vector2::new(bx, by), &Vector2::new(cx, cy), &FrameTransform::new(tx, ty, yaw));
            prop_assert!((got - expect).norm() <= 1e-12);
        }
    }
}

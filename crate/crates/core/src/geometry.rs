//! Frame-tagged planar geometry: closest-point planes, planar rigid
//! transforms and planar poses.
//!
//! Everything here lives in a Manhattan, single-floor world. Plane normals
//! are horizontal in practice, but [`PlaneCP`] itself accepts any unit
//! 3-vector so the azimuth/elevation view stays meaningful.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Isometry3, Matrix2, Rotation2, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normals shorter than this cannot be normalized.
pub const MIN_NORMAL_NORM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid plane: normal has norm {0:e}")]
    InvalidPlane(f64),
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: FrameId, found: FrameId },
}

/// Reference frame of a geometric quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameId {
    /// Architectural-plan frame.
    B,
    /// Robot map frame.
    M,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::B => f.write_str("B"),
            FrameId::M => f.write_str("M"),
        }
    }
}

/// Dominant horizontal direction of a wall-surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    /// Ties go to `X`.
    pub fn of_normal(normal: &Vector3<f64>) -> Axis {
        if normal.x.abs() >= normal.y.abs() {
            Axis::X
        } else {
            Axis::Y
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed angle that rotates `from` onto `to` about +z, in (-pi, pi].
pub fn signed_angle(from: &Vector2<f64>, to: &Vector2<f64>) -> f64 {
    let cross = from.x * to.y - from.y * to.x;
    let dot = from.dot(to);
    wrap_angle(cross.atan2(dot))
}

/// A plane `normal . x = dist` in closest-point form.
///
/// Construction normalizes the normal and flips `(normal, dist)` jointly so
/// that `dist >= 0`, i.e. the normal points away from the frame origin and
/// the closest point `dist * normal` lies on the positive side. Planes through
/// the origin keep the supplied normal direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCP {
    pub normal: Vector3<f64>,
    pub dist: f64,
    pub frame: FrameId,
}

impl PlaneCP {
    pub fn new(normal: Vector3<f64>, dist: f64, frame: FrameId) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if norm.is_nan() || norm <= MIN_NORMAL_NORM || !dist.is_finite() {
            return Err(GeometryError::InvalidPlane(norm));
        }
        let mut normal = normal / norm;
        let mut dist = dist / norm;
        if dist < 0.0 {
            normal = -normal;
            dist = -dist;
        }
        Ok(Self { normal, dist, frame })
    }

    /// Builds a plane from azimuth, elevation and distance.
    pub fn from_azel(azimuth: f64, elevation: f64, dist: f64, frame: FrameId) -> Result<Self, GeometryError> {
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        Self::new(Vector3::new(ce * ca, ce * sa, se), dist, frame)
    }

    /// `[azimuth, elevation, dist]` view of the plane.
    pub fn azel(&self) -> [f64; 3] {
        let n = &self.normal;
        let azimuth = n.y.atan2(n.x);
        let elevation = n.z.atan2(n.x.hypot(n.y));
        [azimuth, elevation, self.dist]
    }

    /// Closest point of the plane to the frame origin.
    pub fn closest_point(&self) -> Vector3<f64> {
        self.normal * self.dist
    }

    pub fn axis(&self) -> Axis {
        Axis::of_normal(&self.normal)
    }

    /// Signed distance of `q` from the plane along the normal.
    pub fn signed_distance(&self, q: &Vector3<f64>) -> f64 {
        self.normal.dot(q) - self.dist
    }

    /// Horizontal part of the normal (not renormalized).
    pub fn normal_xy(&self) -> Vector2<f64> {
        Vector2::new(self.normal.x, self.normal.y)
    }

    /// Foot of the perpendicular from a horizontal point onto the plane.
    pub fn project_xy(&self, q: &Vector2<f64>) -> Vector2<f64> {
        let n = self.normal_xy();
        let n2 = n.norm_squared();
        if n2 < MIN_NORMAL_NORM {
            return *q;
        }
        let offset = (n.dot(q) - self.dist) / n2;
        q - n * offset
    }
}

/// Planar rigid transform `x -> R(yaw) x + translation`.
///
/// As the map-to-plan estimate it takes quantities from frame `M` to frame
/// `B`; its inverse goes the other way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub translation: Vector2<f64>,
    pub yaw: f64,
}

impl Default for FrameTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl FrameTransform {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            translation: Vector2::new(x, y),
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self {
            translation: Vector2::zeros(),
            yaw: 0.0,
        }
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        *Rotation2::new(self.yaw).matrix()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &FrameTransform) -> FrameTransform {
        FrameTransform {
            translation: self.rotation() * other.translation + self.translation,
            yaw: wrap_angle(self.yaw + other.yaw),
        }
    }

    pub fn inverse(&self) -> FrameTransform {
        let r_inv = self.rotation().transpose();
        FrameTransform {
            translation: -(r_inv * self.translation),
            yaw: wrap_angle(-self.yaw),
        }
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * v
    }

    pub fn apply_point2(&self, q: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * q + self.translation
    }

    /// Planar action on a 3-vector; `z` is untouched.
    pub fn apply_point3(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let xy = self.apply_point2(&Vector2::new(q.x, q.y));
        Vector3::new(xy.x, xy.y, q.z)
    }

    pub fn rotate3(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let xy = self.rotate(&Vector2::new(v.x, v.y));
        Vector3::new(xy.x, xy.y, v.z)
    }

    /// Re-expresses a plane in `target` without checking its source frame.
    pub fn act_on_plane(&self, plane: &PlaneCP, target: FrameId) -> PlaneCP {
        let normal = self.rotate3(&plane.normal);
        let t = Vector3::new(self.translation.x, self.translation.y, 0.0);
        let dist = plane.dist + t.dot(&normal);
        PlaneCP::new(normal, dist, target).expect("rotation preserves unit normals")
    }

    /// Maps a plane from frame `M` into frame `B`.
    pub fn transform_plane(&self, plane: &PlaneCP) -> PlaneCP {
        debug_assert_eq!(plane.frame, FrameId::M, "transform_plane expects an M-frame plane");
        self.act_on_plane(plane, FrameId::B)
    }

    /// Maps a plane from frame `B` back into frame `M`.
    pub fn inverse_transform_plane(&self, plane: &PlaneCP) -> PlaneCP {
        debug_assert_eq!(
            plane.frame,
            FrameId::B,
            "inverse_transform_plane expects a B-frame plane"
        );
        self.inverse().act_on_plane(plane, FrameId::M)
    }

    pub fn apply_pose(&self, pose: &Pose2) -> Pose2 {
        let p = self.apply_point2(&Vector2::new(pose.x, pose.y));
        Pose2::new(p.x, p.y, pose.yaw + self.yaw)
    }
}

/// Planar pose `(x, y, yaw)`; the SE(3) lift has zero roll, pitch and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn as_transform(&self) -> FrameTransform {
        FrameTransform::new(self.x, self.y, self.yaw)
    }

    /// Pose of `other` expressed in the body frame of `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let rel = self.as_transform().inverse().compose(&other.as_transform());
        Pose2::new(rel.translation.x, rel.translation.y, rel.yaw)
    }

    /// `self ⊕ delta`.
    pub fn oplus(&self, delta: &Pose2) -> Pose2 {
        let t = self.as_transform().compose(&delta.as_transform());
        Pose2::new(t.translation.x, t.translation.y, t.yaw)
    }

    pub fn to_isometry3(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

/// Lifts a horizontal point to 3-D at `z = 0`.
pub fn lift(v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn plane(n: [f64; 3], d: f64, frame: FrameId) -> PlaneCP {
        PlaneCP::new(Vector3::new(n[0], n[1], n[2]), d, frame).unwrap()
    }

    #[test]
    fn plane_cp_axis_aligned() {
        let p = plane([1.0, 0.0, 0.0], 2.0, FrameId::B);
        assert_eq!(p.normal, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.dist, 2.0);
        assert_eq!(p.closest_point(), Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn plane_cp_double_flip() {
        let p = plane([-1.0, 0.0, 0.0], -3.0, FrameId::B);
        assert_eq!(p.normal, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.dist, 3.0);
    }

    #[test]
    fn plane_cp_diagonal() {
        let s = 0.5_f64.sqrt();
        let p = plane([s, s, 0.0], 2.0_f64.sqrt(), FrameId::B);
        assert_abs_diff_eq!(p.closest_point(), Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn plane_cp_rejects_zero_normal() {
        let err = PlaneCP::new(Vector3::zeros(), 1.0, FrameId::M).unwrap_err();
        assert!(matches!(err, GeometryError::InvalidPlane(_)));
    }

    #[test]
    fn plane_through_origin_keeps_normal() {
        let p = plane([-1.0, 0.0, 0.0], 0.0, FrameId::B);
        assert_eq!(p.normal, Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn axis_tie_breaks_to_x() {
        let s = 0.5_f64.sqrt();
        assert_eq!(Axis::of_normal(&Vector3::new(s, s, 0.0)), Axis::X);
        assert_eq!(Axis::of_normal(&Vector3::new(0.1, -0.9, 0.0)), Axis::Y);
    }

    #[test]
    fn transform_plane_examples() {
        let p = plane([1.0, 0.0, 0.0], 1.0, FrameId::M);
        let same = FrameTransform::identity().transform_plane(&p);
        assert_eq!(same.normal, p.normal);
        assert_eq!(same.dist, p.dist);
        assert_eq!(same.frame, FrameId::B);

        let rot = FrameTransform::new(0.0, 0.0, FRAC_PI_2).transform_plane(&p);
        assert_abs_diff_eq!(rot.normal, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(rot.dist, 1.0, epsilon = 1e-12);

        let shifted = FrameTransform::new(1.0, 0.0, 0.0).transform_plane(&p);
        assert_abs_diff_eq!(shifted.normal, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(shifted.dist, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let q = Vector2::new(1.0, 2.0);
        assert_eq!(FrameTransform::identity().apply_point2(&q), q);
        let flipped = FrameTransform::new(0.0, 0.0, PI).apply_point2(&q);
        assert_abs_diff_eq!(flipped, Vector2::new(-1.0, -2.0), epsilon = 1e-12);
        let moved = FrameTransform::new(1.0, 0.0, FRAC_PI_2).apply_point2(&Vector2::new(1.0, 0.0));
        assert_abs_diff_eq!(moved, Vector2::new(1.0, 1.0), epsilon = 1e-12);
        let z = FrameTransform::new(1.0, 0.0, FRAC_PI_2).apply_point3(&Vector3::new(1.0, 0.0, 7.0));
        assert_eq!(z.z, 7.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn pose_between_oplus_roundtrip() {
        let a = Pose2::new(1.0, -2.0, 0.3);
        let b = Pose2::new(4.0, 0.5, -1.2);
        let delta = a.between(&b);
        let back = a.oplus(&delta);
        assert_abs_diff_eq!(back.x, b.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, b.y, epsilon = 1e-12);
        assert_abs_diff_eq!(back.yaw, b.yaw, epsilon = 1e-12);
        let iso = b.to_isometry3();
        assert_abs_diff_eq!(iso.translation.vector.z, 0.0);
    }

    fn transform_strategy() -> impl Strategy<Value = FrameTransform> {
        (-20.0..20.0f64, -20.0..20.0f64, -PI..PI).prop_map(|(x, y, yaw)| FrameTransform::new(x, y, yaw))
    }

    fn plane_strategy(frame: FrameId) -> impl Strategy<Value = PlaneCP> {
        (-PI..PI, -1.4..1.4f64, 0.0..30.0f64).prop_map(move |(az, el, d)| PlaneCP::from_azel(az, el, d, frame).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn azel_roundtrip(p in plane_strategy(FrameId::B)) {
            let [az, el, d] = p.azel();
            let q = PlaneCP::from_azel(az, el, d, FrameId::B).unwrap();
            prop_assert!((q.normal - p.normal).norm() < 1e-9);
            prop_assert!((q.dist - p.dist).abs() < 1e-9);
            prop_assert!((p.normal.norm() - 1.0).abs() < 1e-9);
            prop_assert!(p.dist >= 0.0);
        }

        #[test]
        fn planar_group_action(t1 in transform_strategy(), t2 in transform_strategy(),
                               az in -PI..PI, d in 0.0..30.0f64) {
            let p = PlaneCP::from_azel(az, 0.0, d, FrameId::M).unwrap();
            let step = t2.act_on_plane(&t1.act_on_plane(&p, FrameId::M), FrameId::B);
            let once = t2.compose(&t1).act_on_plane(&p, FrameId::B);
            prop_assert!((step.normal.norm() - 1.0).abs() < 1e-12);
            // Planes that land on the origin may legitimately flip.
            if once.dist > 1e-6 {
                prop_assert!((step.normal - once.normal).norm() < 1e-9);
                prop_assert!((step.dist - once.dist).abs() < 1e-9);
            }
        }

        #[test]
        fn compose_with_inverse_is_identity(t in transform_strategy()) {
            let id = t.compose(&t.inverse());
            prop_assert!(id.translation.norm() < 1e-12);
            prop_assert!(id.yaw.abs() < 1e-12);
        }

        #[test]
        fn closest_point_lies_in_plane(p in plane_strategy(FrameId::B), a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let cp = p.closest_point();
            // Two directions spanning the plane.
            let helper = if p.normal.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
            let u = p.normal.cross(&helper).normalize();
            let v = p.normal.cross(&u);
            let q = cp + u * a + v * b;
            prop_assert!(((q - cp).dot(&p.normal)).abs() < 1e-9);
            prop_assert!(p.signed_distance(&q).abs() < 1e-9);
        }
    }
}

//! Pairwise geometric consistency between correspondences.
//!
//! Rooms are compared as points and wall surfaces as point-normals. A
//! surface's point is its foot relative to the owning room center and its
//! normal faces out of the room, so both are intrinsic to the graph and the
//! scores do not depend on where a frame's origin sits.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::{signed_angle, wrap_angle};
use crate::graph::MatchPair;

/// Truncated Gaussian kernel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_c: f64,
    pub epsilon_c: f64,
    pub epsilon_n: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            sigma_c: 0.3,
            epsilon_c: 0.8,
            epsilon_n: 0.15,
        }
    }
}

impl KernelParams {
    /// `exp(-e² / 2σ²)` inside the cutoff, zero outside.
    pub fn distance_kernel(&self, e: f64) -> f64 {
        if e <= self.epsilon_c {
            (-e * e / (2.0 * self.sigma_c * self.sigma_c)).exp()
        } else {
            0.0
        }
    }

    pub fn angles_agree(&self, a: f64, b: f64) -> bool {
        wrap_angle(a - b).abs() <= self.epsilon_n
    }
}

/// A point with an orientation, both in one graph's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointNormal {
    pub point: Vector2<f64>,
    pub normal: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMatch {
    pub pair: MatchPair,
    pub a: Vector2<f64>,
    pub s: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointNormalMatch {
    pub pair: MatchPair,
    pub a: PointNormal,
    pub s: PointNormal,
}

fn shares_endpoint(a: &MatchPair, b: &MatchPair) -> bool {
    a.a_node == b.a_node || a.s_node == b.s_node
}

/// Consistency of two point correspondences: preserved pairwise distance.
pub fn pair_consistency_points(mi: &PointMatch, mj: &PointMatch, k: &KernelParams) -> f64 {
    if shares_endpoint(&mi.pair, &mj.pair) {
        return 0.0;
    }
    let e = ((mi.a - mj.a).norm() - (mi.s - mj.s).norm()).abs();
    k.distance_kernel(e)
}

/// Consistency of two point-normal correspondences: the point-distance
/// kernel, gated on the relative normal angle agreeing across graphs.
pub fn pair_consistency_point_normals(mi: &PointNormalMatch, mj: &PointNormalMatch, k: &KernelParams) -> f64 {
    if shares_endpoint(&mi.pair, &mj.pair) {
        return 0.0;
    }
    let rel_a = signed_angle(&mi.a.normal, &mj.a.normal);
    let rel_s = signed_angle(&mi.s.normal, &mj.s.normal);
    if !k.angles_agree(rel_a, rel_s) {
        return 0.0;
    }
    let e = ((mi.a.point - mj.a.point).norm() - (mi.s.point - mj.s.point).norm()).abs();
    k.distance_kernel(e)
}

/// Whether a surface correspondence agrees with a room correspondence:
/// the surface point's distance to the room center and the angle between
/// the surface normal and the direction to that center must match.
pub fn surface_room_consistent(
    a_surface: &PointNormal,
    a_center: &Vector2<f64>,
    s_surface: &PointNormal,
    s_center: &Vector2<f64>,
    k: &KernelParams,
) -> bool {
    let da = a_center - a_surface.point;
    let ds = s_center - s_surface.point;
    if (da.norm() - ds.norm()).abs() > k.epsilon_c {
        return false;
    }
    if da.norm() < 1e-9 || ds.norm() < 1e-9 {
        return true;
    }
    k.angles_agree(
        signed_angle(&a_surface.normal, &da),
        signed_angle(&s_surface.normal, &ds),
    )
}

/// Symmetric matrix of pairwise consistencies with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub entries: DMatrix<f64>,
    pub pairs: Vec<MatchPair>,
}

impl AffinityMatrix {
    fn build<T>(items: &[T], pair_of: impl Fn(&T) -> &MatchPair, score: impl Fn(&T, &T) -> f64) -> Self {
        let n = items.len();
        let mut entries = DMatrix::identity(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = score(&items[i], &items[j]);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Self {
            entries,
            pairs: items.iter().map(|x| pair_of(x).clone()).collect(),
        }
    }

    pub fn from_points(items: &[PointMatch], k: &KernelParams) -> Self {
        Self::build(items, |m| &m.pair, |a, b| pair_consistency_points(a, b, k))
    }

    pub fn from_point_normals(items: &[PointNormalMatch], k: &KernelParams) -> Self {
        Self::build(items, |m| &m.pair, |a, b| pair_consistency_point_normals(a, b, k))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `uᵀAu / uᵀu` for the indicator vector of `indices`.
    pub fn density_of(&self, indices: &[usize]) -> f64 {
        indicator_density(&self.entries, indices)
    }

    /// Density of the whole matrix: mean row sum.
    pub fn density(&self) -> f64 {
        let all: Vec<usize> = (0..self.len()).collect();
        self.density_of(&all)
    }
}

pub(crate) fn indicator_density(m: &DMatrix<f64>, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &i in indices {
        for &j in indices {
            sum += m[(i, j)];
        }
    }
    sum / indices.len() as f64
}

//! Hierarchical room/surface matching between an architectural graph and a
//! situational graph.
//!
//! Candidates are built top-down: consistent sets of room correspondences
//! first, then surface bijections beneath every room pair. Candidates are
//! flattened bottom-up, scored by global surface affinity and clustered; a
//! single candidate in the top cluster is a unique match.

pub mod affinity;
pub mod candidates;
pub mod densest;
pub mod select;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{LayeredGraph, MatchLevel, NodeId, RoomKind};

pub use crate::graph::MatchPair;
pub use affinity::{AffinityMatrix, KernelParams, PointNormal};
pub use candidates::{build_candidate_graph, combine_candidates, CandidateGraph};
pub use densest::{solve_densest, Densest, DensestParams};
pub use select::select_global;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("affinity matrix is empty")]
    EmptyAffinity,
    #[error("{0} exceeds the combination limit of {1}")]
    Overflow(String, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    pub sigma_c: f64,
    pub epsilon_c: f64,
    pub epsilon_n: f64,
    /// Room-level sets scoring below this fraction of the best are dropped.
    pub room_floor_ratio: f64,
    pub cluster_gap_ratio: f64,
    pub cluster_tie_ratio: f64,
    pub max_combinations: usize,
    pub max_iterations: usize,
    pub convergence: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        let k = KernelParams::default();
        let d = DensestParams::default();
        Self {
            sigma_c: k.sigma_c,
            epsilon_c: k.epsilon_c,
            epsilon_n: k.epsilon_n,
            room_floor_ratio: 0.5,
            cluster_gap_ratio: 1.25,
            cluster_tie_ratio: 1.02,
            max_combinations: 10_000,
            max_iterations: d.max_iterations,
            convergence: d.tolerance,
        }
    }
}

impl MatchParams {
    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            sigma_c: self.sigma_c,
            epsilon_c: self.epsilon_c,
            epsilon_n: self.epsilon_n,
        }
    }

    pub fn densest(&self) -> DensestParams {
        DensestParams {
            max_iterations: self.max_iterations,
            tolerance: self.convergence,
        }
    }
}

/// An injective set of correspondences, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    pub fn new(mut pairs: Vec<MatchPair>) -> Self {
        pairs.sort();
        pairs.dedup();
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn level(&self, level: MatchLevel) -> impl Iterator<Item = &MatchPair> {
        self.pairs.iter().filter(move |p| p.level == level)
    }

    pub fn rooms(&self) -> Vec<&MatchPair> {
        self.level(MatchLevel::Room).collect()
    }

    pub fn surfaces(&self) -> Vec<&MatchPair> {
        self.level(MatchLevel::WallSurface).collect()
    }

    /// No node on either side appears twice within a level.
    pub fn is_injective(&self) -> bool {
        let mut a = BTreeSet::new();
        let mut s = BTreeSet::new();
        self.pairs
            .iter()
            .all(|p| a.insert((p.level, &p.a_node)) && s.insert((p.level, &p.s_node)))
    }

    /// Canonical id used for deterministic tie breaking.
    pub fn id(&self) -> String {
        self.pairs
            .iter()
            .map(|p| format!("{}~{}", p.a_node, p.s_node))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn room_signature(&self) -> Vec<(NodeId, NodeId)> {
        self.rooms()
            .into_iter()
            .map(|p| (p.a_node.clone(), p.s_node.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Unique,
    Ambiguous,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub status: MatchStatus,
    pub best: Option<MatchSet>,
    pub score: f64,
    /// Distinct room assignments per score cluster, best cluster first.
    pub cluster_sizes: Vec<usize>,
    /// All-level candidates in the best cluster.
    pub top_candidates: usize,
    pub candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl MatchOutcome {
    pub fn no_match(diagnostic: impl Into<String>) -> Self {
        Self {
            status: MatchStatus::NoMatch,
            best: None,
            score: 0.0,
            cluster_sizes: Vec::new(),
            top_candidates: 0,
            candidates: 0,
            diagnostic: Some(diagnostic.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomFeature {
    pub center: Vector2<f64>,
    /// Owned surfaces in room order.
    pub surfaces: Vec<NodeId>,
}

/// Matching view of one graph: four-wall rooms and their surfaces as
/// point-normals anchored at the room center.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphFeatures {
    pub rooms: BTreeMap<NodeId, RoomFeature>,
    pub surfaces: BTreeMap<NodeId, PointNormal>,
    pub surface_room: BTreeMap<NodeId, NodeId>,
}

impl GraphFeatures {
    pub fn of(g: &LayeredGraph) -> Self {
        let mut out = GraphFeatures::default();
        for room in g.rooms.values().filter(|r| r.kind == RoomKind::FourWall) {
            let mut ids = Vec::new();
            for sid in &room.surfaces {
                let Some(surface) = g.surface(sid) else { continue };
                let foot = surface.plane.project_xy(&room.center);
                let offset = foot - room.center;
                let normal = if offset.norm() > 1e-9 {
                    offset.normalize()
                } else {
                    surface.plane.normal_xy().normalize()
                };
                out.surfaces.insert(sid.clone(), PointNormal { point: foot, normal });
                out.surface_room.insert(sid.clone(), room.id.clone());
                ids.push(sid.clone());
            }
            if ids.len() == 4 {
                out.rooms.insert(
                    room.id.clone(),
                    RoomFeature {
                        center: room.center,
                        surfaces: ids,
                    },
                );
            } else {
                for sid in ids {
                    out.surfaces.remove(&sid);
                    out.surface_room.remove(&sid);
                }
            }
        }
        out
    }
}

/// Full matching: candidate graph, combination, global selection.
pub fn match_graphs(
    agraph: &LayeredGraph,
    sgraph: &LayeredGraph,
    params: &MatchParams,
) -> Result<MatchOutcome, MatchError> {
    let fa = GraphFeatures::of(agraph);
    let fs = GraphFeatures::of(sgraph);
    match_features(&fa, &fs, params)
}

pub fn match_features(
    fa: &GraphFeatures,
    fs: &GraphFeatures,
    params: &MatchParams,
) -> Result<MatchOutcome, MatchError> {
    if fs.rooms.is_empty() {
        return Ok(MatchOutcome::no_match("situational graph has no four-wall rooms"));
    }
    if fa.rooms.is_empty() {
        return Ok(MatchOutcome::no_match("architectural graph has no four-wall rooms"));
    }
    let cg = build_candidate_graph(fa, fs, params);
    if cg.is_empty() {
        let mut out = MatchOutcome::no_match("no consistent candidates");
        if let Some(d) = cg.overflow {
            out.status = MatchStatus::Ambiguous;
            out.diagnostic = Some(d);
        }
        return Ok(out);
    }
    let cands = match combine_candidates(&cg, params.max_combinations) {
        Ok(c) => c,
        Err(MatchError::Overflow(what, cap)) => {
            let mut out = MatchOutcome::no_match(format!("{what} exceeds the combination limit of {cap}"));
            out.status = MatchStatus::Ambiguous;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let mut out = select_global(&cands, fa, fs, params);
    if let Some(d) = cg.overflow {
        if out.status == MatchStatus::Unique {
            out.status = MatchStatus::Ambiguous;
            out.best = None;
        }
        out.diagnostic = Some(d);
    }
    Ok(out)
}

//! The match-candidates tree.
//!
//! Alternating levels: the root holds alternative room-level sets
//! ([`RoomSet`], M-nodes). Each set joins room correspondences
//! ([`RoomNode`], m-nodes), and each of those holds alternative surface
//! bijections ([`SurfaceSet`], leaf M-nodes).

use std::collections::BTreeSet;

use super::affinity::{
    pair_consistency_point_normals, surface_room_consistent, AffinityMatrix, PointMatch, PointNormalMatch,
};
use super::densest::solve_densest;
use super::{GraphFeatures, MatchError, MatchParams, MatchSet};
use crate::graph::MatchPair;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    pub pairs: Vec<MatchPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomNode {
    pub pair: MatchPair,
    pub children: Vec<SurfaceSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSet {
    pub rooms: Vec<RoomNode>,
    pub density: f64,
}

impl RoomSet {
    fn key(&self) -> Vec<&MatchPair> {
        self.rooms.iter().map(|r| &r.pair).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateGraph {
    /// Alternatives at the room level, best density first.
    pub roots: Vec<RoomSet>,
    pub overflow: Option<String>,
}

impl CandidateGraph {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

const PERMUTATIONS_OF_4: usize = 24;

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(PERMUTATIONS_OF_4);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct: BTreeSet<usize> = p.iter().copied().collect();
                    if distinct.len() == 4 {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Maximal cliques of the consistency graph, Bron–Kerbosch with pivoting.
/// Returns `None` when more than `cap` cliques exist.
pub fn maximal_cliques(adj: &[Vec<bool>], cap: usize) -> Option<Vec<Vec<usize>>> {
    fn recurse(
        adj: &[Vec<bool>],
        r: &mut Vec<usize>,
        p: Vec<usize>,
        x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
            return out.len() <= cap;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| (p.iter().filter(|&&v| adj[u][v]).count(), std::cmp::Reverse(u)))
            .unwrap();
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        let mut p = p;
        let mut x = x;
        for v in candidates {
            r.push(v);
            let np = p.iter().copied().filter(|&u| adj[v][u]).collect();
            let nx = x.iter().copied().filter(|&u| adj[v][u]).collect();
            if !recurse(adj, r, np, nx, out, cap) {
                return false;
            }
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
        true
    }
    let mut out = Vec::new();
    let p: Vec<usize> = (0..adj.len()).collect();
    if recurse(adj, &mut Vec::new(), p, Vec::new(), &mut out, cap) {
        out.sort();
        Some(out)
    } else {
        None
    }
}

fn point_normal_match(fa: &GraphFeatures, fs: &GraphFeatures, pair: &MatchPair) -> PointNormalMatch {
    PointNormalMatch {
        pair: pair.clone(),
        a: fa.surfaces[&pair.a_node],
        s: fs.surfaces[&pair.s_node],
    }
}

/// Surface bijections under `room` that pass the intralevel and interlevel
/// checks against every room pair in `context` (which includes `room`).
fn surface_leaves(
    fa: &GraphFeatures,
    fs: &GraphFeatures,
    room: &MatchPair,
    context: &[&MatchPair],
    params: &MatchParams,
) -> Vec<SurfaceSet> {
    let k = params.kernel();
    let ra = &fa.rooms[&room.a_node];
    let rs = &fs.rooms[&room.s_node];
    let mut leaves = Vec::new();
    for perm in permutations4() {
        let pairs: Vec<MatchPair> = (0..4)
            .map(|i| MatchPair::surface(ra.surfaces[i].clone(), rs.surfaces[perm[i]].clone()))
            .collect();
        let items: Vec<PointNormalMatch> = pairs.iter().map(|p| point_normal_match(fa, fs, p)).collect();
        let interlevel = items.iter().all(|m| {
            context.iter().all(|rp| {
                let ca = &fa.rooms[&rp.a_node].center;
                let cs = &fs.rooms[&rp.s_node].center;
                surface_room_consistent(&m.a, ca, &m.s, cs, &k)
            })
        });
        if !interlevel {
            continue;
        }
        let intralevel =
            (0..4).all(|i| (i + 1..4).all(|j| pair_consistency_point_normals(&items[i], &items[j], &k) > 0.0));
        if intralevel {
            leaves.push(SurfaceSet { pairs });
        }
    }
    leaves
}

/// Attach surface leaves to a room set, dropping room pairs that have
/// none until the remaining pairs are stable.
fn populate(fa: &GraphFeatures, fs: &GraphFeatures, mut pairs: Vec<MatchPair>, params: &MatchParams) -> Vec<RoomNode> {
    loop {
        let context: Vec<&MatchPair> = pairs.iter().collect();
        let nodes: Vec<RoomNode> = pairs
            .iter()
            .map(|p| RoomNode {
                pair: p.clone(),
                children: surface_leaves(fa, fs, p, &context, params),
            })
            .collect();
        if nodes.iter().all(|n| !n.children.is_empty()) {
            return nodes;
        }
        pairs = nodes
            .into_iter()
            .filter(|n| !n.children.is_empty())
            .map(|n| n.pair)
            .collect();
        if pairs.is_empty() {
            return Vec::new();
        }
    }
}

pub fn build_candidate_graph(fa: &GraphFeatures, fs: &GraphFeatures, params: &MatchParams) -> CandidateGraph {
    let k = params.kernel();
    let mut room_items = Vec::new();
    for (aid, ra) in &fa.rooms {
        for (sid, rs) in &fs.rooms {
            room_items.push(PointMatch {
                pair: MatchPair::room(aid.clone(), sid.clone()),
                a: ra.center,
                s: rs.center,
            });
        }
    }
    if room_items.is_empty() {
        return CandidateGraph::default();
    }
    let affinity = AffinityMatrix::from_points(&room_items, &k);
    let n = affinity.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && affinity.entries[(i, j)] > 0.0).collect())
        .collect();

    let mut overflow = None;
    let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    match maximal_cliques(&adj, params.max_combinations) {
        Some(cliques) => sets.extend(cliques),
        None => {
            overflow = Some(format!("more than {} room-level sets", params.max_combinations));
        }
    }
    if let Ok(d) = solve_densest(&affinity, &params.densest()) {
        sets.insert(d.selected);
    }

    let scored: Vec<(Vec<usize>, f64)> = sets
        .into_iter()
        .map(|s| {
            let d = affinity.density_of(&s);
            (s, d)
        })
        .collect();
    let best = scored.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let floor = params.room_floor_ratio * best;

    let mut roots: Vec<RoomSet> = Vec::new();
    for (set, _) in scored.into_iter().filter(|(_, d)| *d >= floor) {
        let pairs: Vec<MatchPair> = set.iter().map(|&i| affinity.pairs[i].clone()).collect();
        let rooms = populate(fa, fs, pairs, params);
        if rooms.is_empty() {
            continue;
        }
        let idx: Vec<usize> = rooms
            .iter()
            .map(|r| affinity.pairs.iter().position(|p| *p == r.pair).unwrap())
            .collect();
        roots.push(RoomSet {
            density: affinity.density_of(&idx),
            rooms,
        });
    }

    // Drop duplicates and sets whose room pairs are contained in another set.
    let keys: Vec<BTreeSet<MatchPair>> = roots.iter().map(|r| r.key().into_iter().cloned().collect()).collect();
    let mut keep = vec![true; roots.len()];
    for i in 0..roots.len() {
        for j in 0..roots.len() {
            if i == j || !keep[j] {
                continue;
            }
            let strict = keys[i].len() < keys[j].len() && keys[i].is_subset(&keys[j]);
            let dup = keys[i] == keys[j] && j < i;
            if strict || dup {
                keep[i] = false;
                break;
            }
        }
    }
    let mut roots: Vec<RoomSet> = roots
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r)
        .collect();
    roots.sort_by(|a, b| b.density.total_cmp(&a.density).then_with(|| a.key().cmp(&b.key())));
    CandidateGraph { roots, overflow }
}

/// Flatten the tree: one surface set chosen per room pair, all room pairs
/// of a set taken together. Non-injective combinations are dropped.
pub fn combine_candidates(cg: &CandidateGraph, cap: usize) -> Result<Vec<MatchSet>, MatchError> {
    let mut out: BTreeSet<MatchSet> = BTreeSet::new();
    let mut total = 0usize;
    for root in &cg.roots {
        let count = root
            .rooms
            .iter()
            .try_fold(1usize, |acc, r| acc.checked_mul(r.children.len()))
            .unwrap_or(usize::MAX);
        total = total.saturating_add(count);
        if total > cap {
            return Err(MatchError::Overflow(format!("{total} candidate combinations"), cap));
        }
        let mut partial: Vec<Vec<MatchPair>> = vec![root.rooms.iter().map(|r| r.pair.clone()).collect()];
        for room in &root.rooms {
            let mut next = Vec::with_capacity(partial.len() * room.children.len());
            for base in &partial {
                for leaf in &room.children {
                    let mut v = base.clone();
                    v.extend(leaf.pairs.iter().cloned());
                    next.push(v);
                }
            }
            partial = next;
        }
        for pairs in partial {
            let set = MatchSet::new(pairs);
            if set.is_injective() {
                out.insert(set);
            }
        }
    }
    Ok(out.into_iter().collect())
}

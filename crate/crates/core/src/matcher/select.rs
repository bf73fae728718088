//! Global scoring and clustering of flattened candidates.

use std::collections::BTreeSet;

use super::affinity::{AffinityMatrix, PointNormalMatch};
use super::{GraphFeatures, MatchOutcome, MatchParams, MatchSet, MatchStatus};

/// Density of the surface-level affinity restricted to the candidate.
pub fn global_score(cand: &MatchSet, fa: &GraphFeatures, fs: &GraphFeatures, params: &MatchParams) -> f64 {
    let items: Vec<PointNormalMatch> = cand
        .surfaces()
        .into_iter()
        .filter_map(|p| {
            Some(PointNormalMatch {
                pair: p.clone(),
                a: *fa.surfaces.get(&p.a_node)?,
                s: *fs.surfaces.get(&p.s_node)?,
            })
        })
        .collect();
    if items.is_empty() {
        return 0.0;
    }
    AffinityMatrix::from_point_normals(&items, &params.kernel()).density()
}

/// Split descending scores into clusters at gaps wider than `gap` (ratio
/// between neighbours). Ratios within `tie` never split. Returns the
/// cluster index of each score.
pub fn cluster_scores(scores: &[f64], gap: f64, tie: f64) -> Vec<usize> {
    let mut labels = Vec::with_capacity(scores.len());
    let mut current = 0;
    for (i, &s) in scores.iter().enumerate() {
        if i > 0 {
            let prev = scores[i - 1];
            let ratio = if s > 0.0 {
                prev / s
            } else if prev > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
            if ratio > tie && ratio > gap {
                current += 1;
            }
        }
        labels.push(current);
    }
    labels
}

pub fn select_global(cands: &[MatchSet], fa: &GraphFeatures, fs: &GraphFeatures, params: &MatchParams) -> MatchOutcome {
    if cands.is_empty() {
        return MatchOutcome::no_match("no candidates");
    }
    let mut scored: Vec<(f64, String, &MatchSet)> = cands
        .iter()
        .map(|c| (global_score(c, fa, fs, params), c.id(), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let scores: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let labels = cluster_scores(&scores, params.cluster_gap_ratio, params.cluster_tie_ratio);
    let n_clusters = labels.last().map_or(0, |l| l + 1);
    let mut hypotheses: Vec<BTreeSet<Vec<(String, String)>>> = vec![BTreeSet::new(); n_clusters];
    for (label, (_, _, c)) in labels.iter().zip(&scored) {
        hypotheses[*label].insert(c.room_signature());
    }
    let cluster_sizes: Vec<usize> = hypotheses.iter().map(|h| h.len()).collect();
    let top_candidates = labels.iter().filter(|&&l| l == 0).count();
    let (score, _, top) = &scored[0];
    let unique = top_candidates == 1;
    MatchOutcome {
        status: if unique {
            MatchStatus::Unique
        } else {
            MatchStatus::Ambiguous
        },
        best: unique.then(|| (*top).clone()),
        score: *score,
        cluster_sizes,
        top_candidates,
        candidates: cands.len(),
        diagnostic: None,
    }
}

//! Pipeline orchestration and evaluation metrics.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agraph::{build_agraph, FloorplanSpec};
use crate::dataset::Dataset;
use crate::geometry::{wrap_angle, FrameTransform, Pose2};
use crate::graph::{LayeredGraph, MatchPair};
use crate::matcher::{match_graphs, MatchOutcome, MatchParams, MatchSet, MatchStatus};
use crate::merger::{
    merge, planar_surface_residual, room_center_residual, ISGraph, MergeError, MergeParams, PlanarPlane,
};
use crate::sgraph::{simulate_sgraph, GroundTruth, SimConfig};

pub const SEED_ENV: &str = "GRAPH_LOCATE_SEED";

/// Seed from the environment, when set.
pub fn seed_override() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok())
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {estimated} estimated, {truth} ground truth")]
    LengthMismatch { estimated: usize, truth: usize },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("solver: {0}")]
    Solver(MergeError),
}

fn stage(stage: &'static str) -> impl Fn(String) -> EvalError {
    move |message| EvalError::Stage { stage, message }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApeStats {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub yaw_rmse: f64,
    pub poses: usize,
}

/// Translational absolute pose error of index-aligned trajectories.
pub fn ape(estimated: &[Pose2], truth: &[Pose2]) -> Result<ApeStats, EvalError> {
    if estimated.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            estimated: estimated.len(),
            truth: truth.len(),
        });
    }
    if estimated.is_empty() {
        return Ok(ApeStats {
            rmse: 0.0,
            mean: 0.0,
            max: 0.0,
            yaw_rmse: 0.0,
            poses: 0,
        });
    }
    let n = estimated.len() as f64;
    let errs: Vec<f64> = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.position() - t.position()).norm())
        .collect();
    let yaw2: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| wrap_angle(e.yaw - t.yaw).powi(2))
        .sum();
    Ok(ApeStats {
        rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mean: errs.iter().sum::<f64>() / n,
        max: errs.iter().copied().fold(0.0, f64::max),
        yaw_rmse: (yaw2 / n).sqrt(),
        poses: estimated.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformError {
    pub translation: f64,
    pub yaw: f64,
}

impl TransformError {
    pub fn between(estimate: &FrameTransform, truth: &FrameTransform) -> Self {
        Self {
            translation: (estimate.translation - truth.translation).norm(),
            yaw: wrap_angle(estimate.yaw - truth.yaw).abs(),
        }
    }
}

/// Pair-level precision and recall of `found` against `truth`.
pub fn precision_recall(found: &[MatchPair], truth: &[MatchPair]) -> (f64, f64) {
    let t: BTreeSet<&MatchPair> = truth.iter().collect();
    let hits = found.iter().filter(|p| t.contains(p)).count() as f64;
    let precision = if found.is_empty() {
        0.0
    } else {
        hits / found.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    (precision, recall)
}

/// Post-merge distance between matched landmarks: room center offsets and
/// surface offset differences, pooled.
pub fn landmark_rmse(agraph: &LayeredGraph, sgraph: &LayeredGraph, matches: &MatchSet, t: &FrameTransform) -> f64 {
    let mut sq = Vec::new();
    for p in &matches.pairs {
        if let (Some(a), Some(s)) = (agraph.room(&p.a_node), sgraph.room(&p.s_node)) {
            sq.push(room_center_residual(&a.center, &s.center, t).norm_squared());
        } else if let (Some(a), Some(s)) = (agraph.surface(&p.a_node), sgraph.surface(&p.s_node)) {
            let r = planar_surface_residual(&PlanarPlane::of(&a.plane), &PlanarPlane::of(&s.plane), t);
            sq.push(r.y * r.y);
        }
    }
    if sq.is_empty() {
        return 0.0;
    }
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub matching: MatchParams,
    pub merging: MergeParams,
}

/// Where the situational graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SgraphSource {
    Simulate(SimConfig),
    Given(LayeredGraph),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub status: MatchStatus,
    /// Rooms revealed when the match first became unique.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique_after_rooms: Option<usize>,
    pub rooms_observed: usize,
    pub matched_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<FrameTransform>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform_error: Option<TransformError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ape: Option<ApeStats>,
    /// Matched room-center and surface-offset distances after merging.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmark_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Wall-clock seconds per stage. Kept out of [`EvalReport`] so reports
/// stay reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub agraph: f64,
    pub sgraph: f64,
    pub matching: f64,
    pub merging: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EvalReport,
    pub timings: StageTimings,
    pub isgraph: Option<ISGraph>,
    pub outcome: MatchOutcome,
    pub sgraph: LayeredGraph,
    pub truth: Option<GroundTruth>,
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Match after each revealed room until the result is unique, then match
/// the full observation. Returns the outcome to merge with and the number
/// of rooms at the first unique match.
fn incremental_match(
    agraph: &LayeredGraph,
    cfg: &SimConfig,
    params: &MatchParams,
) -> Result<(LayeredGraph, GroundTruth, MatchOutcome, Option<usize>), EvalError> {
    let n = cfg.visited_rooms.len();
    let mut first_unique = None;
    for k in 1..=n {
        let (s, _) = simulate_sgraph(agraph, &cfg.prefix(k)).map_err(|e| stage("sgraph")(e.to_string()))?;
        let outcome = match_graphs(agraph, &s, params).map_err(|e| stage("match")(e.to_string()))?;
        if outcome.status == MatchStatus::Unique {
            first_unique = Some((k, outcome));
            break;
        }
    }
    let (full, truth) = simulate_sgraph(agraph, cfg).map_err(|e| stage("sgraph")(e.to_string()))?;
    let Some((k, early)) = first_unique else {
        let outcome = match_graphs(agraph, &full, params).map_err(|e| stage("match")(e.to_string()))?;
        return Ok((full, truth, outcome, None));
    };
    if k == n {
        return Ok((full, truth, early, Some(k)));
    }
    let outcome = match_graphs(agraph, &full, params).map_err(|e| stage("match")(e.to_string()))?;
    if outcome.status == MatchStatus::Unique {
        Ok((full, truth, outcome, Some(k)))
    } else {
        Ok((full, truth, early, Some(k)))
    }
}

pub fn run_pipeline(
    dataset: &str,
    agraph: &LayeredGraph,
    source: &SgraphSource,
    params: &PipelineParams,
) -> Result<PipelineOutput, EvalError> {
    let mut timings = StageTimings::default();
    let t0 = Instant::now();
    let (sgraph, truth, outcome, unique_after) = match source {
        SgraphSource::Simulate(cfg) => {
            let (s, gt, o, k) = incremental_match(agraph, cfg, &params.matching)?;
            (s, Some(gt), o, k)
        }
        SgraphSource::Given(s) => {
            let o = match_graphs(agraph, s, &params.matching).map_err(|e| stage("match")(e.to_string()))?;
            let k = (o.status == MatchStatus::Unique).then(|| s.four_wall_rooms().count());
            (s.clone(), None, o, k)
        }
    };
    timings.matching = elapsed(t0);

    let mut report = EvalReport {
        dataset: dataset.to_string(),
        seed: truth.as_ref().map(|t| t.seed),
        status: outcome.status,
        unique_after_rooms: unique_after,
        rooms_observed: sgraph.rooms.len(),
        matched_pairs: 0,
        precision: None,
        recall: None,
        transform: None,
        transform_error: None,
        ape: None,
        landmark_rmse: None,
        merge_cost: None,
        note: outcome.diagnostic.clone(),
    };

    let mut isgraph = None;
    if let (MatchStatus::Unique, Some(best)) = (outcome.status, &outcome.best) {
        report.matched_pairs = best.len();
        if let Some(gt) = &truth {
            let (p, r) = precision_recall(&best.pairs, &gt.correspondence);
            report.precision = Some(p);
            report.recall = Some(r);
        }
        let t1 = Instant::now();
        match merge(agraph, &sgraph, best, &params.merging) {
            Ok(is) => {
                report.transform = Some(is.transform);
                report.merge_cost = Some(is.cost);
                report.landmark_rmse = Some(landmark_rmse(agraph, &sgraph, best, &is.transform));
                if let Some(gt) = &truth {
                    report.transform_error = Some(TransformError::between(&is.transform, &gt.transform));
                    let est: Vec<Pose2> = sgraph
                        .trajectory()
                        .iter()
                        .map(|k| is.transform.apply_pose(&k.pose))
                        .collect();
                    report.ape = Some(ape(&est, &gt.trajectory)?);
                }
                isgraph = Some(is);
            }
            Err(e @ MergeError::MatchRejected { .. }) => {
                report.status = MatchStatus::Ambiguous;
                report.note = Some(e.to_string());
            }
            Err(e) => return Err(EvalError::Solver(e)),
        }
        timings.merging = elapsed(t1);
    }
    Ok(PipelineOutput {
        report,
        timings,
        isgraph,
        outcome,
        sgraph,
        truth,
    })
}

/// Builds the plan and runs the pipeline on one simulated dataset.
pub fn run_dataset(ds: &Dataset, params: &PipelineParams) -> Result<PipelineOutput, EvalError> {
    let t0 = Instant::now();
    let agraph = build_agraph(&ds.plan).map_err(|e| stage("agraph")(e.to_string()))?;
    let build = elapsed(t0);
    let mut out = run_pipeline(&ds.id, &agraph, &SgraphSource::Simulate(ds.sim.clone()), params)?;
    out.timings.agraph = build;
    Ok(out)
}

pub fn build_plan(spec: &FloorplanSpec) -> Result<LayeredGraph, EvalError> {
    build_agraph(spec).map_err(|e| stage("agraph")(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub reports: Vec<EvalReport>,
    pub unique: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ape_rmse_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ape_rmse_max: Option<f64>,
    pub metric_note: String,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Runs datasets in parallel; reports come back sorted by dataset id.
pub fn run_suite(datasets: &[Dataset], params: &PipelineParams) -> Result<(SuiteReport, Vec<StageTimings>), EvalError> {
    let mut outs: Vec<(EvalReport, StageTimings)> = datasets
        .par_iter()
        .map(|d| run_dataset(d, params).map(|o| (o.report, o.timings)))
        .collect::<Result<_, _>>()?;
    outs.sort_by(|a, b| a.0.dataset.cmp(&b.0.dataset));
    let (reports, timings): (Vec<EvalReport>, Vec<StageTimings>) = outs.into_iter().unzip();
    let mut apes: Vec<f64> = reports.iter().filter_map(|r| r.ape.map(|a| a.rmse)).collect();
    let max = apes.iter().copied().reduce(f64::max);
    Ok((
        SuiteReport {
            unique: reports.iter().filter(|r| r.status == MatchStatus::Unique).count(),
            ape_rmse_median: median(&mut apes),
            ape_rmse_max: max,
            reports,
            metric_note: "landmark_rmse pools matched room-center and wall-surface offset distances after merging"
                .into(),
        },
        timings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ape_examples() {
        let traj: Vec<Pose2> = (0..10)
            .map(|i| Pose2::new(i as f64, 0.5 * i as f64, 0.1 * i as f64))
            .collect();
        assert_eq!(ape(&traj, &traj).unwrap().rmse, 0.0);

        let shifted: Vec<Pose2> = traj.iter().map(|p| Pose2::new(p.x + 0.1, p.y, p.yaw)).collect();
        assert_abs_diff_eq!(ape(&shifted, &traj).unwrap().rmse, 0.1, epsilon = 1e-12);

        let offsets = [0.1, 0.2, 0.0, 0.3, 0.5, 0.0, 0.1, 0.4, 0.2, 0.1];
        let moved: Vec<Pose2> = traj
            .iter()
            .zip(offsets)
            .map(|(p, o)| Pose2::new(p.x, p.y + o, p.yaw))
            .collect();
        let expect = (offsets.iter().map(|o| o * o).sum::<f64>() / 10.0).sqrt();
        let got = ape(&moved, &traj).unwrap();
        assert_abs_diff_eq!(got.rmse, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(got.max, 0.5, epsilon = 1e-12);

        assert!(matches!(ape(&traj[..3], &traj), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn precision_recall_counts() {
        let t = vec![MatchPair::room("a", "s"), MatchPair::room("b", "t")];
        let f = vec![MatchPair::room("a", "s"), MatchPair::room("b", "u")];
        assert_eq!(precision_recall(&f, &t), (0.5, 0.5));
        assert_eq!(precision_recall(&t, &t), (1.0, 1.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}

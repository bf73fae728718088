//! Situational graphs: simulated from an architectural graph, or ingested
//! from JSON.
//!
//! The simulator emits an already-estimated graph (landmark estimates and a
//! trajectory), not raw scans. Noise is injected at landmark level.

use std::collections::BTreeSet;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agraph::pair_room_center;
use crate::geometry::{FrameId, FrameTransform, PlaneCP, Pose2};
use crate::graph::{
    Edge, Floor, GraphError, GraphRole, Keyframe, LayeredGraph, MatchPair, Room, RoomKind, WallSurface,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SGraphError {
    #[error("unknown room '{0}'")]
    UnknownRoom(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("frame error: {0}")]
    Frame(String),
    #[error("layer error: {0}")]
    Layer(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn zero_pair() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Hidden map-to-plan transform.
    pub true_transform: FrameTransform,
    pub visited_rooms: Vec<String>,
    #[serde(default)]
    pub noise_plane_dist: f64,
    #[serde(default)]
    pub noise_plane_angle: f64,
    #[serde(default)]
    pub noise_room_center: f64,
    pub odom_step: f64,
    /// `[sigma_translation, sigma_yaw]`.
    #[serde(default = "zero_pair")]
    pub odom_noise: [f64; 2],
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self, agraph: &LayeredGraph) -> Result<(), SGraphError> {
        let sigmas = [
            self.noise_plane_dist,
            self.noise_plane_angle,
            self.noise_room_center,
            self.odom_noise[0],
            self.odom_noise[1],
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(SGraphError::InvalidConfig(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        if self.odom_step.is_nan() || self.odom_step <= 0.0 {
            return Err(SGraphError::InvalidConfig("odom_step must be positive".into()));
        }
        if self.visited_rooms.is_empty() {
            return Err(SGraphError::InvalidConfig("visited_rooms is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.visited_rooms {
            if !agraph.rooms.contains_key(r) {
                return Err(SGraphError::UnknownRoom(r.clone()));
            }
            if !seen.insert(r) {
                return Err(SGraphError::InvalidConfig(format!("room '{r}' is visited twice")));
            }
        }
        Ok(())
    }

    /// Same configuration restricted to the first `k` visited rooms.
    pub fn prefix(&self, k: usize) -> SimConfig {
        let mut c = self.clone();
        c.visited_rooms.truncate(k);
        c
    }
}

/// What the simulator knows and the matcher must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub transform: FrameTransform,
    pub correspondence: Vec<MatchPair>,
    /// Noise-free trajectory in frame `B`.
    pub trajectory: Vec<Pose2>,
    pub seed: u64,
}

/// Rotates the plane about z by `N(0, sigma_angle)` around `pivot`, a point
/// on the plane, and shifts it along its normal by `N(0, sigma_dist)`, then
/// re-applies the sign convention.
pub fn perturb_plane<R: Rng>(
    plane: &PlaneCP,
    pivot: &Vector2<f64>,
    sigma_dist: f64,
    sigma_angle: f64,
    rng: &mut R,
) -> PlaneCP {
    let dd = gaussian(sigma_dist, rng);
    let da = gaussian(sigma_angle, rng);
    let rot = FrameTransform::new(0.0, 0.0, da);
    let normal = rot.rotate3(&plane.normal);
    let dist = plane.dist + normal.xy().dot(pivot) - plane.normal.xy().dot(pivot) + dd;
    PlaneCP::new(normal, dist, plane.frame).expect("rotation keeps a unit normal")
}

fn gaussian<R: Rng>(sigma: f64, rng: &mut R) -> f64 {
    // Always draw so random streams stay aligned when a sigma is zero.
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    sigma * z
}

const LANDMARK_STREAM: u64 = 0;
const TRAJECTORY_STREAM: u64 = 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Noise-free trajectory through the given waypoints at `step` spacing.
///
/// Each waypoint is a keyframe; the first faces yaw 0 and later samples face
/// along the segment that reaches them, so the path for a prefix of the
/// waypoints is a prefix of the full path.
pub fn lay_trajectory(waypoints: &[Vector2<f64>], step: f64) -> Vec<Pose2> {
    let mut poses = Vec::new();
    let Some(first) = waypoints.first() else {
        return poses;
    };
    poses.push(Pose2::new(first.x, first.y, 0.0));
    for seg in waypoints.windows(2) {
        let d = seg[1] - seg[0];
        let len = d.norm();
        if len < 1e-12 {
            continue;
        }
        let heading = d.y.atan2(d.x);
        let n = (len / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let s = (k as f64 * step).min(len);
            let p = seg[0] + d * (s / len);
            poses.push(Pose2::new(p.x, p.y, heading));
        }
    }
    poses
}

/// Simulates the robot's estimated graph of the visited rooms.
pub fn simulate_sgraph(agraph: &LayeredGraph, cfg: &SimConfig) -> Result<(LayeredGraph, GroundTruth), SGraphError> {
    cfg.validate(agraph)?;
    let truth = cfg.true_transform;
    let mut landmark_rng = stream(cfg.seed, LANDMARK_STREAM);
    let mut traj_rng = stream(cfg.seed, TRAJECTORY_STREAM);

    let mut g = LayeredGraph::new(GraphRole::Situational, FrameId::M);
    let mut correspondence = Vec::new();
    let mut true_centers = Vec::new();

    for (k, a_room_id) in cfg.visited_rooms.iter().enumerate() {
        let a_room = &agraph.rooms[a_room_id];
        true_centers.push(a_room.center);
        let s_room_id = format!("room_{k:02}");
        let mut planes = Vec::with_capacity(a_room.surfaces.len());
        let mut ids = Vec::with_capacity(a_room.surfaces.len());
        let center_m = truth.inverse().apply_point2(&a_room.center);
        for (j, a_surf) in a_room.surfaces.iter().enumerate() {
            let in_map = truth.inverse_transform_plane(&agraph.wall_surfaces[a_surf].plane);
            let pivot = in_map.project_xy(&center_m);
            let noisy = perturb_plane(
                &in_map,
                &pivot,
                cfg.noise_plane_dist,
                cfg.noise_plane_angle,
                &mut landmark_rng,
            );
            let id = format!("{s_room_id}/surface_{j}");
            let mut s = WallSurface::new(id.clone(), noisy);
            s.owner_room = Some(s_room_id.clone());
            g.wall_surfaces.insert(id.clone(), s);
            g.edges.push(Edge::RoomSurface {
                room: s_room_id.clone(),
                surface: id.clone(),
            });
            correspondence.push(MatchPair::surface(a_surf.clone(), id.clone()));
            planes.push(noisy);
            ids.push(id);
        }
        let jitter = Vector2::new(
            gaussian(cfg.noise_room_center, &mut landmark_rng),
            gaussian(cfg.noise_room_center, &mut landmark_rng),
        );
        let center = match a_room.kind {
            RoomKind::FourWall => pair_room_center([&planes[0], &planes[1]], [&planes[2], &planes[3]])
                .unwrap_or_else(|_| truth.inverse().apply_point2(&a_room.center)),
            RoomKind::TwoWall => truth.inverse().apply_point2(&a_room.center),
        };
        g.rooms.insert(
            s_room_id.clone(),
            Room {
                id: s_room_id.clone(),
                center: center + jitter,
                kind: a_room.kind,
                surfaces: ids,
                frame: FrameId::M,
            },
        );
        correspondence.push(MatchPair::room(a_room_id.clone(), s_room_id));
    }

    let floor_id = "floor_0".to_string();
    let centers: Vec<Vector2<f64>> = g.rooms.values().map(|r| r.center).collect();
    for r in g.rooms.keys() {
        g.edges.push(Edge::FloorRoom {
            floor: floor_id.clone(),
            room: r.clone(),
        });
    }
    g.floors.insert(
        floor_id.clone(),
        Floor {
            id: floor_id,
            center: centers.iter().sum::<Vector2<f64>>() / centers.len() as f64,
            rooms: g.rooms.keys().cloned().collect(),
        },
    );

    let trajectory = lay_trajectory(&true_centers, cfg.odom_step);
    let inv = truth.inverse();
    let [sigma_t, sigma_yaw] = cfg.odom_noise;
    let mut prev_id: Option<String> = None;
    for (i, pose_b) in trajectory.iter().enumerate() {
        let exact = inv.apply_pose(pose_b);
        let noise = Pose2::new(
            gaussian(sigma_t, &mut traj_rng),
            gaussian(sigma_t, &mut traj_rng),
            gaussian(sigma_yaw, &mut traj_rng),
        );
        let estimate = Pose2::new(exact.x + noise.x, exact.y + noise.y, exact.yaw + noise.yaw);
        let id = format!("kf_{i:05}");
        g.keyframes.insert(
            id.clone(),
            Keyframe {
                id: id.clone(),
                pose: estimate,
                frame: FrameId::M,
                timestamp: i as u64,
            },
        );
        if let Some(prev) = prev_id {
            let delta = trajectory[i - 1].between(pose_b);
            let measured = Pose2::new(
                delta.x + gaussian(sigma_t, &mut traj_rng),
                delta.y + gaussian(sigma_t, &mut traj_rng),
                delta.yaw + gaussian(sigma_yaw, &mut traj_rng),
            );
            g.edges.push(Edge::Odometry {
                from: prev,
                to: id.clone(),
                delta: measured,
            });
        }
        prev_id = Some(id);
    }

    g.validate()?;
    correspondence.sort();
    Ok((
        g,
        GroundTruth {
            transform: truth,
            correspondence,
            trajectory,
            seed: cfg.seed,
        },
    ))
}

/// A validated situational graph and the fixes applied while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub graph: LayeredGraph,
    pub warnings: Vec<String>,
}

fn parse_error(e: serde_path_to_error::Error<serde_json::Error>) -> SGraphError {
    SGraphError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    }
}

/// Parses any layered graph, keeping the JSON path of schema violations.
pub fn parse_graph(text: &str) -> Result<LayeredGraph, SGraphError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(parse_error)
}

/// Renormalizes planes and axis labels in place, returning one warning per fix.
pub fn normalize_planes(g: &mut LayeredGraph) -> Result<Vec<String>, SGraphError> {
    let mut warnings = Vec::new();
    for s in g.wall_surfaces.values_mut() {
        let p = s.plane;
        let fixed = PlaneCP::new(p.normal, p.dist, p.frame).map_err(|e| SGraphError::Parse {
            path: format!("wall_surfaces[{}].plane", s.id),
            message: e.to_string(),
        })?;
        if (p.normal.norm() - 1.0).abs() > 1e-9 || p.dist < 0.0 {
            warnings.push(format!("surface '{}': plane renormalized", s.id));
            s.plane = fixed;
        }
        if s.axis != s.plane.axis() {
            warnings.push(format!("surface '{}': axis label corrected", s.id));
            s.axis = s.plane.axis();
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(warnings)
}

/// Reads a situational graph from JSON and enforces its layer restrictions.
pub fn ingest_sgraph(text: &str) -> Result<Ingested, SGraphError> {
    let mut graph = parse_graph(text)?;
    if graph.frame != FrameId::M {
        return Err(SGraphError::Frame(format!(
            "situational graph declares frame {}",
            graph.frame
        )));
    }
    if graph.role != GraphRole::Situational {
        return Err(SGraphError::Layer(format!(
            "expected a situational graph, found {:?}",
            graph.role
        )));
    }
    if !graph.doorways.is_empty() || !graph.walls.is_empty() {
        return Err(SGraphError::Layer(
            "situational graphs carry no doorways or walls".into(),
        ));
    }
    let warnings = normalize_planes(&mut graph)?;
    graph.validate()?;
    Ok(Ingested { graph, warnings })
}

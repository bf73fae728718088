//! Graph merging: estimate the map-to-plan transform from matched rooms and
//! surfaces, then re-express the situational graph in the plan frame.

pub mod residuals;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, FrameId, FrameTransform, PlaneCP};
use crate::graph::{Edge, GraphError, GraphRole, LayeredGraph, MatchLevel, NodeId, WallSurface};
use crate::matcher::MatchSet;

pub use residuals::{
    planar_surface_jacobian, planar_surface_residual, room_center_jacobian, room_center_residual, room_merge_residual,
    surface_merge_jacobian, surface_merge_residual, PlanarPlane,
};

/// Prefix given to situational node ids inside a merged graph.
pub const S_PREFIX: &str = "s:";

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),
    #[error("solver failed after {iterations} iterations at cost {cost:.3e}: {reason}")]
    SolveFailed {
        iterations: usize,
        cost: f64,
        reason: String,
    },
    #[error("match {a_node} ~ {s_node} rejected: residual ({angle:.3} rad, {dist:.3} m) exceeds the gate")]
    MatchRejected {
        a_node: NodeId,
        s_node: NodeId,
        angle: f64,
        dist: f64,
    },
    #[error("matched node '{0}' not found")]
    MissingNode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeParams {
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub huber_delta: f64,
    /// Residual scales: room center (m), surface angle (rad), surface offset (m).
    pub sigma_room: f64,
    pub sigma_angle: f64,
    pub sigma_dist: f64,
    pub gate_dist: f64,
    pub gate_angle: f64,
    /// Also refine matched situational landmarks, held near their estimates.
    pub refine_landmarks: bool,
    pub prior_sigma_position: f64,
    pub prior_sigma_angle: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            initial_damping: 1e-4,
            damping_factor: 10.0,
            max_iterations: 100,
            relative_tolerance: 1e-10,
            huber_delta: 0.5,
            sigma_room: 1.0,
            sigma_angle: 1.0,
            sigma_dist: 1.0,
            gate_dist: 0.3,
            gate_angle: 0.2,
            refine_landmarks: false,
            prior_sigma_position: 0.05,
            prior_sigma_angle: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomBlock {
    pub a_node: NodeId,
    pub s_node: NodeId,
    pub c_b: Vector2<f64>,
    pub c_m: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceBlock {
    pub a_node: NodeId,
    pub s_node: NodeId,
    pub b: PlanarPlane,
    pub m: PlanarPlane,
    /// Point on the B plane where the distance gate is measured.
    pub anchor: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub transform: FrameTransform,
    pub warning: Option<String>,
}

/// Closed-form seed. Room centers and the feet of matched room centers on
/// matched surfaces are aligned by least squares; with too few points the
/// surfaces alone fix yaw and translation; otherwise identity.
pub fn initialize_transform(
    rooms: &[RoomBlock],
    surfaces: &[SurfaceBlock],
    sgraph: &LayeredGraph,
    agraph: &LayeredGraph,
) -> Initialization {
    let mut points: Vec<(Vector2<f64>, Vector2<f64>)> = rooms.iter().map(|r| (r.c_m, r.c_b)).collect();
    for s in surfaces {
        let owner = |g: &LayeredGraph, id: &str| g.surface(id).and_then(|w| w.owner_room.clone());
        let (Some(om), Some(ob)) = (owner(sgraph, &s.s_node), owner(agraph, &s.a_node)) else {
            continue;
        };
        let Some(rm) = rooms.iter().find(|r| r.s_node == om && r.a_node == ob) else {
            continue;
        };
        let foot = |p: &PlanarPlane, c: &Vector2<f64>| c - p.normal() * (p.normal().dot(c) - p.dist);
        points.push((foot(&s.m, &rm.c_m), foot(&s.b, &rm.c_b)));
    }
    if let Some(t) = fit_rigid(&points) {
        return Initialization {
            transform: t,
            warning: None,
        };
    }
    if let Some(t) = fit_surfaces(surfaces) {
        return Initialization {
            transform: t,
            warning: None,
        };
    }
    let warning = "too few matches for a closed-form seed; starting from identity".to_string();
    log::warn!("{warning}");
    Initialization {
        transform: FrameTransform::identity(),
        warning: Some(warning),
    }
}

/// Least-squares rigid fit `b ≈ R m + t` of 2-D point pairs.
pub fn fit_rigid(points: &[(Vector2<f64>, Vector2<f64>)]) -> Option<FrameTransform> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let cm = points.iter().map(|p| p.0).sum::<Vector2<f64>>() / n;
    let cb = points.iter().map(|p| p.1).sum::<Vector2<f64>>() / n;
    let mut h = nalgebra::Matrix2::zeros();
    for (m, b) in points {
        h += (m - cm) * (b - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    if svd.singular_values[0] < 1e-12 {
        return None;
    }
    let mut d = nalgebra::Matrix2::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(1, 1)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let rot = FrameTransform::new(0.0, 0.0, yaw);
    let t = cb - rot.rotate(&cm);
    Some(FrameTransform::new(t.x, t.y, yaw))
}

/// Yaw from the first surface (both normal orientations tried), then the
/// translation from the offset equations of all surfaces.
fn fit_surfaces(surfaces: &[SurfaceBlock]) -> Option<FrameTransform> {
    let first = surfaces.first()?;
    let mut best: Option<(f64, FrameTransform)> = None;
    for flip in [0.0, std::f64::consts::PI] {
        let yaw = wrap_angle(first.b.angle - first.m.angle + flip);
        let rot = FrameTransform::new(0.0, 0.0, yaw);
        let mut a = DMatrix::zeros(surfaces.len(), 2);
        let mut rhs = DVector::zeros(surfaces.len());
        for (i, s) in surfaces.iter().enumerate() {
            let n = rot.rotate(&s.m.normal());
            let sign = if n.dot(&s.b.normal()) >= 0.0 { 1.0 } else { -1.0 };
            a[(i, 0)] = sign * n.x;
            a[(i, 1)] = sign * n.y;
            rhs[i] = s.b.dist - sign * s.m.dist;
        }
        let svd = a.clone().svd(true, true);
        if svd.singular_values.iter().filter(|&&x| x > 1e-9).count() < 2 {
            return None;
        }
        let t = svd.solve(&rhs, 1e-12).ok()?;
        let candidate = FrameTransform::new(t[0], t[1], yaw);
        let cost: f64 = surfaces
            .iter()
            .map(|s| planar_surface_residual(&s.b, &s.m, &candidate).norm_squared())
            .sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, candidate));
        }
    }
    best.map(|b| b.1)
}

/// The merge problem for one match set.
#[derive(Debug, Clone)]
pub struct MergeProblem<'a> {
    pub agraph: &'a LayeredGraph,
    pub sgraph: &'a LayeredGraph,
    pub matches: MatchSet,
    pub rooms: Vec<RoomBlock>,
    pub surfaces: Vec<SurfaceBlock>,
    pub params: MergeParams,
}

impl<'a> MergeProblem<'a> {
    pub fn new(
        agraph: &'a LayeredGraph,
        sgraph: &'a LayeredGraph,
        matches: &MatchSet,
        params: &MergeParams,
    ) -> Result<Self, MergeError> {
        let mut rooms = Vec::new();
        let mut surfaces = Vec::new();
        for p in &matches.pairs {
            match p.level {
                MatchLevel::Room => {
                    let a = agraph
                        .room(&p.a_node)
                        .ok_or_else(|| MergeError::MissingNode(p.a_node.clone()))?;
                    let s = sgraph
                        .room(&p.s_node)
                        .ok_or_else(|| MergeError::MissingNode(p.s_node.clone()))?;
                    rooms.push(RoomBlock {
                        a_node: p.a_node.clone(),
                        s_node: p.s_node.clone(),
                        c_b: a.center,
                        c_m: s.center,
                    });
                }
                MatchLevel::WallSurface => {
                    let a = agraph
                        .surface(&p.a_node)
                        .ok_or_else(|| MergeError::MissingNode(p.a_node.clone()))?;
                    let s = sgraph
                        .surface(&p.s_node)
                        .ok_or_else(|| MergeError::MissingNode(p.s_node.clone()))?;
                    let anchor = match a.owner_room.as_deref().and_then(|r| agraph.room(r)) {
                        Some(room) => a.plane.project_xy(&room.center),
                        None => a.plane.project_xy(&Vector2::zeros()),
                    };
                    surfaces.push(SurfaceBlock {
                        a_node: p.a_node.clone(),
                        s_node: p.s_node.clone(),
                        b: PlanarPlane::of(&a.plane),
                        m: PlanarPlane::of(&s.plane),
                        anchor,
                    });
                }
            }
        }
        Ok(Self {
            agraph,
            sgraph,
            matches: matches.clone(),
            rooms,
            surfaces,
            params: params.clone(),
        })
    }

    fn landmark_dim(&self) -> usize {
        if self.params.refine_landmarks {
            2 * (self.rooms.len() + self.surfaces.len())
        } else {
            0
        }
    }

    fn dim(&self) -> usize {
        3 + self.landmark_dim()
    }

    fn initial_state(&self, t: &FrameTransform) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        x[0] = t.translation.x;
        x[1] = t.translation.y;
        x[2] = t.yaw;
        if self.params.refine_landmarks {
            let mut k = 3;
            for r in &self.rooms {
                x[k] = r.c_m.x;
                x[k + 1] = r.c_m.y;
                k += 2;
            }
            for s in &self.surfaces {
                x[k] = s.m.angle;
                x[k + 1] = s.m.dist;
                k += 2;
            }
        }
        x
    }

    /// Whitened residual blocks with Jacobians, in fixed order.
    fn linearize(&self, x: &DVector<f64>) -> Vec<Block> {
        let t = FrameTransform::new(x[0], x[1], x[2]);
        let n = self.dim();
        let p = &self.params;
        let refine = p.refine_landmarks;
        let mut blocks = Vec::new();
        let mut k = 3;
        for r in &self.rooms {
            let c_m = if refine { Vector2::new(x[k], x[k + 1]) } else { r.c_m };
            let res = room_center_residual(&r.c_b, &c_m, &t) / p.sigma_room;
            let (jt, jm) = room_center_jacobian(&c_m, &t);
            let mut j = DMatrix::zeros(2, n);
            j.view_mut((0, 0), (2, 3)).copy_from(&(jt / p.sigma_room));
            if refine {
                j.view_mut((0, k), (2, 2)).copy_from(&(jm / p.sigma_room));
            }
            blocks.push(Block::new(res.as_slice(), j, Some(p.huber_delta), BlockKind::Room));
            if refine {
                let prior = (c_m - r.c_m) / p.prior_sigma_position;
                let mut jp = DMatrix::zeros(2, n);
                jp[(0, k)] = 1.0 / p.prior_sigma_position;
                jp[(1, k + 1)] = 1.0 / p.prior_sigma_position;
                blocks.push(Block::new(prior.as_slice(), jp, None, BlockKind::Prior));
                k += 2;
            }
        }
        for s in &self.surfaces {
            let m = if refine {
                PlanarPlane {
                    angle: x[k],
                    dist: x[k + 1],
                }
            } else {
                s.m
            };
            let raw = planar_surface_residual(&s.b, &m, &t);
            let w = Vector2::new(1.0 / p.sigma_angle, 1.0 / p.sigma_dist);
            let res = raw.component_mul(&w);
            let (jt, jm) = planar_surface_jacobian(&s.b, &m, &t);
            let mut j = DMatrix::zeros(2, n);
            for row in 0..2 {
                for col in 0..3 {
                    j[(row, col)] = jt[(row, col)] * w[row];
                }
                if refine {
                    j[(row, k)] = jm[(row, 0)] * w[row];
                    j[(row, k + 1)] = jm[(row, 1)] * w[row];
                }
            }
            blocks.push(Block::new(res.as_slice(), j, Some(p.huber_delta), BlockKind::Surface));
            if refine {
                let prior = Vector2::new(
                    wrap_angle(m.angle - s.m.angle) / p.prior_sigma_angle,
                    (m.dist - s.m.dist) / p.prior_sigma_position,
                );
                let mut jp = DMatrix::zeros(2, n);
                jp[(0, k)] = 1.0 / p.prior_sigma_angle;
                jp[(1, k + 1)] = 1.0 / p.prior_sigma_position;
                blocks.push(Block::new(prior.as_slice(), jp, None, BlockKind::Prior));
                k += 2;
            }
        }
        blocks
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        self.linearize(x).iter().map(Block::cost).sum()
    }

    /// Numerical rank of the transform columns of the stacked Jacobian.
    pub fn transform_rank(&self, t: &FrameTransform) -> usize {
        let x = self.initial_state(t);
        let blocks = self.linearize(&x);
        let rows: usize = blocks
            .iter()
            .filter(|b| b.kind != BlockKind::Prior)
            .map(|b| b.residual.len())
            .sum();
        if rows == 0 {
            return 0;
        }
        let mut j = DMatrix::zeros(rows, 3);
        let mut r = 0;
        for b in blocks.iter().filter(|b| b.kind != BlockKind::Prior) {
            let m = b.residual.len();
            j.view_mut((r, 0), (m, 3)).copy_from(&b.jacobian.view((0, 0), (m, 3)));
            r += m;
        }
        let sv = j.singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > 1e-9 * max.max(1.0)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Room,
    Surface,
    Prior,
}

struct Block {
    residual: DVector<f64>,
    jacobian: DMatrix<f64>,
    huber: Option<f64>,
    kind: BlockKind,
}

impl Block {
    fn new(res: &[f64], jacobian: DMatrix<f64>, huber: Option<f64>, kind: BlockKind) -> Self {
        Self {
            residual: DVector::from_column_slice(res),
            jacobian,
            huber,
            kind,
        }
    }

    /// Half the robustified squared norm.
    fn cost(&self) -> f64 {
        let e2 = self.residual.norm_squared();
        match self.huber {
            Some(delta) if e2 > delta * delta => 0.5 * (2.0 * delta * e2.sqrt() - delta * delta),
            _ => 0.5 * e2,
        }
    }

    /// Iteratively reweighted least-squares weight.
    fn weight(&self) -> f64 {
        let e = self.residual.norm();
        match self.huber {
            Some(delta) if e > delta => delta / e,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub level: MatchLevel,
    pub a_node: NodeId,
    pub s_node: NodeId,
    pub residual: [f64; 2],
}

/// The merged graph and the solve that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISGraph {
    pub graph: LayeredGraph,
    pub transform: FrameTransform,
    pub cost: f64,
    pub iterations: usize,
    pub blocks: Vec<BlockReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl ISGraph {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,cost,damping,accepted\n");
        for r in &self.trace {
            let _ = writeln!(out, "{},{:e},{:e},{}", r.iteration, r.cost, r.damping, r.accepted);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("merged graph serialization is infallible")
    }
}

fn levenberg_marquardt(
    problem: &MergeProblem,
    mut x: DVector<f64>,
) -> Result<(DVector<f64>, f64, usize, Vec<TraceRow>), MergeError> {
    let p = &problem.params;
    let n = x.len();
    let mut lambda = p.initial_damping;
    let mut cost = problem.cost(&x);
    let mut trace = vec![TraceRow {
        iteration: 0,
        cost,
        damping: lambda,
        accepted: true,
    }];
    let mut iterations = 0;
    while iterations < p.max_iterations && cost > 0.0 {
        iterations += 1;
        let blocks = problem.linearize(&x);
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for b in &blocks {
            let w = b.weight();
            h += w * b.jacobian.transpose() * &b.jacobian;
            g += w * b.jacobian.transpose() * &b.residual;
        }
        if g.amax() < 1e-15 {
            break;
        }
        let mut accepted = false;
        let mut new_cost = cost;
        let mut predicted: Option<f64> = None;
        for _ in 0..16 {
            let damped = &h + DMatrix::identity(n, n) * lambda;
            let step = match damped.cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    lambda *= p.damping_factor;
                    continue;
                }
            };
            predicted.get_or_insert_with(|| -(g.dot(&step) + 0.5 * (step.transpose() * &h * &step)[(0, 0)]));
            let mut trial = &x + &step;
            trial[2] = wrap_angle(trial[2]);
            if p.refine_landmarks {
                let first_surface = 3 + 2 * problem.rooms.len();
                for k in (first_surface..n).step_by(2) {
                    trial[k] = wrap_angle(trial[k]);
                }
            }
            let c = problem.cost(&trial);
            if c <= cost {
                x = trial;
                new_cost = c;
                lambda = (lambda / p.damping_factor).max(1e-12);
                accepted = true;
                break;
            }
            trace.push(TraceRow {
                iteration: iterations,
                cost: c,
                damping: lambda,
                accepted: false,
            });
            lambda *= p.damping_factor;
        }
        if !accepted {
            // Rounding hides any further decrease once the model predicts none.
            if predicted.is_some_and(|d| d <= p.relative_tolerance * cost) {
                break;
            }
            return Err(MergeError::SolveFailed {
                iterations,
                cost,
                reason: "every damped step increased the cost".into(),
            });
        }
        trace.push(TraceRow {
            iteration: iterations,
            cost: new_cost,
            damping: lambda,
            accepted: true,
        });
        let change = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        cost = new_cost;
        if change < p.relative_tolerance || cost < 1e-30 {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(MergeError::SolveFailed {
            iterations,
            cost,
            reason: "non-finite cost".into(),
        });
    }
    Ok((x, cost, iterations, trace))
}

fn prefixed(id: &str) -> NodeId {
    format!("{S_PREFIX}{id}")
}

/// Situational graph moved into B with every id prefixed.
fn re_expressed(sgraph: &LayeredGraph, t: &FrameTransform) -> LayeredGraph {
    let moved = sgraph.rigidly_moved(t, FrameId::B);
    let mut g = LayeredGraph::new(GraphRole::Merged, FrameId::B);
    for k in moved.keyframes.into_values() {
        let mut k = k;
        k.id = prefixed(&k.id);
        g.keyframes.insert(k.id.clone(), k);
    }
    for s in moved.wall_surfaces.into_values() {
        let mut w = WallSurface::new(prefixed(&s.id), s.plane);
        w.owner_room = s.owner_room.as_deref().map(prefixed);
        w.owner_wall = s.owner_wall.as_deref().map(prefixed);
        g.wall_surfaces.insert(w.id.clone(), w);
    }
    for r in moved.rooms.into_values() {
        let mut r = r;
        r.id = prefixed(&r.id);
        r.surfaces = r.surfaces.iter().map(|s| prefixed(s)).collect();
        g.rooms.insert(r.id.clone(), r);
    }
    for f in moved.floors.into_values() {
        let mut f = f;
        f.id = prefixed(&f.id);
        f.rooms = f.rooms.iter().map(|r| prefixed(r)).collect();
        g.floors.insert(f.id.clone(), f);
    }
    g.edges = moved
        .edges
        .into_iter()
        .map(|e| match e {
            Edge::RoomSurface { room, surface } => Edge::RoomSurface {
                room: prefixed(&room),
                surface: prefixed(&surface),
            },
            Edge::WallSurface { wall, surface } => Edge::WallSurface {
                wall: prefixed(&wall),
                surface: prefixed(&surface),
            },
            Edge::DoorwayRoom { doorway, room } => Edge::DoorwayRoom {
                doorway: prefixed(&doorway),
                room: prefixed(&room),
            },
            Edge::Odometry { from, to, delta } => Edge::Odometry {
                from: prefixed(&from),
                to: prefixed(&to),
                delta,
            },
            Edge::FloorRoom { floor, room } => Edge::FloorRoom {
                floor: prefixed(&floor),
                room: prefixed(&room),
            },
            Edge::Match { a_node, s_node, level } => Edge::Match {
                a_node,
                s_node: prefixed(&s_node),
                level,
            },
        })
        .collect();
    g
}

/// Union of the plan graph and the re-expressed situational graph. The
/// situational floor folds into the plan's floor when there is one.
fn assemble(
    agraph: &LayeredGraph,
    sgraph: &LayeredGraph,
    matches: &MatchSet,
    t: &FrameTransform,
) -> Result<LayeredGraph, MergeError> {
    let s = re_expressed(sgraph, t);
    let mut g = agraph.clone();
    g.role = GraphRole::Merged;
    g.keyframes.extend(s.keyframes);
    g.wall_surfaces.extend(s.wall_surfaces);
    g.rooms.extend(s.rooms);
    let plan_floor = g.floors.keys().next().cloned();
    let s_floors: Vec<NodeId> = s.floors.keys().cloned().collect();
    match &plan_floor {
        Some(fid) => {
            let mut extra = Vec::new();
            for f in s.floors.values() {
                extra.extend(f.rooms.iter().cloned());
            }
            let floor = g.floors.get_mut(fid).expect("floor key exists");
            floor.rooms.extend(extra);
            for e in s.edges {
                match e {
                    Edge::FloorRoom { floor, room } if s_floors.contains(&floor) => g.edges.push(Edge::FloorRoom {
                        floor: fid.clone(),
                        room,
                    }),
                    other => g.edges.push(other),
                }
            }
        }
        None => {
            g.floors.extend(s.floors);
            g.edges.extend(s.edges);
        }
    }
    for p in &matches.pairs {
        g.edges.push(Edge::Match {
            a_node: p.a_node.clone(),
            s_node: prefixed(&p.s_node),
            level: p.level,
        });
    }
    g.validate()?;
    Ok(g)
}

/// Signed distance from `q` in B to the M plane moved by `t`.
fn local_offset(m: &PlanarPlane, t: &FrameTransform, q: &Vector2<f64>) -> f64 {
    let n = t.rotate(&m.normal());
    n.dot(q) - (m.dist + t.translation.dot(&n))
}

pub fn solve_merge(problem: &MergeProblem) -> Result<ISGraph, MergeError> {
    let init = initialize_transform(&problem.rooms, &problem.surfaces, problem.sgraph, problem.agraph);
    if problem.transform_rank(&init.transform) < 3 {
        return Err(MergeError::DegenerateProblem(format!(
            "{} room and {} surface matches do not constrain all three transform parameters",
            problem.rooms.len(),
            problem.surfaces.len()
        )));
    }
    let x0 = problem.initial_state(&init.transform);
    let (x, cost, iterations, trace) = levenberg_marquardt(problem, x0)?;
    let t = FrameTransform::new(x[0], x[1], x[2]);

    let mut sgraph = problem.sgraph.clone();
    if problem.params.refine_landmarks {
        let mut k = 3;
        for r in &problem.rooms {
            if let Some(room) = sgraph.rooms.get_mut(&r.s_node) {
                room.center = Vector2::new(x[k], x[k + 1]);
            }
            k += 2;
        }
        for s in &problem.surfaces {
            if let Some(surface) = sgraph.wall_surfaces.get_mut(&s.s_node) {
                let n = nalgebra::Vector3::new(x[k].cos(), x[k].sin(), 0.0);
                if let Ok(plane) = PlaneCP::new(n, x[k + 1], FrameId::M) {
                    *surface = WallSurface {
                        plane,
                        axis: plane.axis(),
                        ..surface.clone()
                    };
                }
            }
            k += 2;
        }
    }

    let mut blocks = Vec::new();
    for (i, r) in problem.rooms.iter().enumerate() {
        let c_m = sgraph.room(&r.s_node).map_or(r.c_m, |room| room.center);
        let res = room_center_residual(&r.c_b, &c_m, &t);
        debug_assert!(i < problem.rooms.len());
        blocks.push(BlockReport {
            level: MatchLevel::Room,
            a_node: r.a_node.clone(),
            s_node: r.s_node.clone(),
            residual: [res.x, res.y],
        });
    }
    for s in &problem.surfaces {
        let m = sgraph.surface(&s.s_node).map_or(s.m, |w| PlanarPlane::of(&w.plane));
        let res = planar_surface_residual(&s.b, &m, &t);
        let offset = local_offset(&m, &t, &s.anchor);
        if res.x.abs() > problem.params.gate_angle || offset.abs() > problem.params.gate_dist {
            return Err(MergeError::MatchRejected {
                a_node: s.a_node.clone(),
                s_node: s.s_node.clone(),
                angle: res.x,
                dist: offset,
            });
        }
        blocks.push(BlockReport {
            level: MatchLevel::WallSurface,
            a_node: s.a_node.clone(),
            s_node: s.s_node.clone(),
            residual: [res.x, res.y],
        });
    }

    let graph = assemble(problem.agraph, &sgraph, &problem.matches, &t)?;
    Ok(ISGraph {
        graph,
        transform: t,
        cost,
        iterations,
        blocks,
        warnings: init.warning.into_iter().collect(),
        trace,
    })
}

/// Build and solve in one call.
pub fn merge(
    agraph: &LayeredGraph,
    sgraph: &LayeredGraph,
    matches: &MatchSet,
    params: &MergeParams,
) -> Result<ISGraph, MergeError> {
    let problem = MergeProblem::new(agraph, sgraph, matches, params)?;
    solve_merge(&problem)
}

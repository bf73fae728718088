//! Architectural graph construction from a rectangular floorplan, plus the
//! wall, room and doorway factor residuals defined on it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lift, Axis, FrameId, GeometryError, PlaneCP};
use crate::graph::{Doorway, Edge, Floor, GraphRole, LayeredGraph, NodeId, Room, RoomKind, Wall, WallSurface};

/// Below this norm the wall midpoint is treated as the origin.
const DEGENERATE_MIDPOINT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AGraphError {
    #[error("invalid floorplan: {0}")]
    InvalidFloorplan(String),
    #[error("invalid doorway: {0}")]
    InvalidDoorway(String),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: String,
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl RoomSpec {
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorwaySpec {
    pub id: String,
    pub position: [f64; 3],
    pub rooms: [String; 2],
}

/// Rectangular floorplan: axis-aligned room interiors separated by walls of
/// uniform thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorplanSpec {
    pub wall_thickness: f64,
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub doorways: Vec<DoorwaySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactorKind {
    Wall,
    Doorway,
    RoomToSurfaces,
    RoomMerge,
    SurfaceMerge,
    Odometry,
}

/// A residual vector with its information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorResidual {
    pub value: DVector<f64>,
    pub information: DMatrix<f64>,
    pub kind: FactorKind,
}

impl FactorResidual {
    /// `valueᵀ Λ value`.
    pub fn squared_norm(&self) -> f64 {
        (self.value.transpose() * &self.information * &self.value)[(0, 0)]
    }
}

/// Per-kind information matrices. Unset kinds use the identity; a set kind
/// gives the diagonal of Λ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorWeights {
    #[serde(default)]
    pub diagonals: BTreeMap<FactorKind, Vec<f64>>,
}

impl FactorWeights {
    pub fn information(&self, kind: FactorKind, dim: usize) -> DMatrix<f64> {
        match self.diagonals.get(&kind) {
            Some(diag) if diag.len() == dim => DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            Some(diag) => {
                log::warn!(
                    "ignoring {kind:?} weights of length {} (dimension is {dim})",
                    diag.len()
                );
                DMatrix::identity(dim, dim)
            }
            None => DMatrix::identity(dim, dim),
        }
    }
}

/// Center of the wall bounded by two opposed surfaces of the same axis.
///
/// `w` is the midpoint of the two closest points and the result adds the
/// component of the start point `s` that lies along the wall.
pub fn wall_center(p1: &PlaneCP, p2: &PlaneCP, s: &Vector3<f64>) -> Result<Vector3<f64>, AGraphError> {
    debug_assert_eq!(p1.frame, p2.frame, "wall surfaces from different frames");
    if p1.axis() != p2.axis() {
        return Err(AGraphError::AxisMismatch(format!(
            "wall surfaces have axes {:?} and {:?}",
            p1.axis(),
            p2.axis()
        )));
    }
    let w = 0.5 * (p1.dist.abs() * p1.normal + p2.dist.abs() * p2.normal);
    let w_hat = if w.norm() < DEGENERATE_MIDPOINT {
        p1.normal
    } else {
        w.normalize()
    };
    Ok(w + (s - s.dot(&w_hat) * w_hat))
}

/// Residual between an estimated wall center and the one implied by its
/// surfaces.
pub fn wall_factor(
    wall: &Wall,
    p1: &PlaneCP,
    p2: &PlaneCP,
    weights: &FactorWeights,
) -> Result<FactorResidual, AGraphError> {
    let predicted = wall_center(p1, p2, &wall.start_point)?;
    let value = wall.center - predicted;
    Ok(FactorResidual {
        value: DVector::from_column_slice(value.as_slice()),
        information: weights.information(FactorKind::Wall, 3),
        kind: FactorKind::Wall,
    })
}

/// Horizontal mid-line of two roughly parallel planes as `(unit normal, offset)`.
fn mid_line(p1: &PlaneCP, p2: &PlaneCP) -> (Vector2<f64>, f64) {
    let n1 = p1.normal_xy();
    let n2 = p2.normal_xy();
    let sign = if n1.dot(&n2) < 0.0 { -1.0 } else { 1.0 };
    let sum = n1 + sign * n2;
    let len = sum.norm();
    let n = sum / len;
    // Rescale offsets so they refer to the averaged normal.
    let offset = 0.5 * (p1.dist + sign * p2.dist) * 2.0 / len;
    (n, offset)
}

/// Room center from two opposed surface pairs: the intersection of the two
/// pairs' mid-lines. For axis-aligned rooms this is `(cx, cy)` of the x- and
/// y-pair closest-point midpoints.
pub fn pair_room_center(pair_a: [&PlaneCP; 2], pair_b: [&PlaneCP; 2]) -> Result<Vector2<f64>, AGraphError> {
    let (na, oa) = mid_line(pair_a[0], pair_a[1]);
    let (nb, ob) = mid_line(pair_b[0], pair_b[1]);
    let m = Matrix2::new(na.x, na.y, nb.x, nb.y);
    let det = m.determinant();
    if det.abs() < 1e-6 {
        return Err(AGraphError::AxisMismatch("room surface pairs are parallel".into()));
    }
    Ok(m.try_inverse().expect("checked determinant") * Vector2::new(oa, ob))
}

/// Center of a four-wall room from its two x-surfaces and two y-surfaces.
pub fn room_center(px1: &PlaneCP, px2: &PlaneCP, py1: &PlaneCP, py2: &PlaneCP) -> Result<Vector2<f64>, AGraphError> {
    for (p, want) in [(px1, Axis::X), (px2, Axis::X), (py1, Axis::Y), (py2, Axis::Y)] {
        if p.axis() != want {
            return Err(AGraphError::AxisMismatch(format!(
                "expected a {want:?}-surface, got {:?}",
                p.axis()
            )));
        }
    }
    pair_room_center([px1, px2], [py1, py2])
}

/// Doorway-to-rooms residual: the doorway as placed from room 1 minus the
/// doorway as placed from room 2, using the plan-measured offsets.
pub fn doorway_factor(
    d: &Doorway,
    r1: &Room,
    r2: &Room,
    weights: &FactorWeights,
) -> Result<FactorResidual, AGraphError> {
    if d.rooms[0] != r1.id || d.rooms[1] != r2.id {
        return Err(AGraphError::InvalidDoorway(format!(
            "doorway '{}' connects {:?}, called with ['{}', '{}']",
            d.id, d.rooms, r1.id, r2.id
        )));
    }
    let from_1 = lift(&r1.center) + d.offsets[0];
    let from_2 = lift(&r2.center) + d.offsets[1];
    let value = from_1 - from_2;
    Ok(FactorResidual {
        value: DVector::from_column_slice(value.as_slice()),
        information: weights.information(FactorKind::Doorway, 3),
        kind: FactorKind::Doorway,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    XMin,
    XMax,
    YMin,
    YMax,
}

impl Side {
    const ALL: [Side; 4] = [Side::XMin, Side::XMax, Side::YMin, Side::YMax];

    fn tag(self) -> &'static str {
        match self {
            Side::XMin => "xmin",
            Side::XMax => "xmax",
            Side::YMin => "ymin",
            Side::YMax => "ymax",
        }
    }

    fn opposite(self) -> Side {
        match self {
            Side::XMin => Side::XMax,
            Side::XMax => Side::XMin,
            Side::YMin => Side::YMax,
            Side::YMax => Side::YMin,
        }
    }

    /// Coordinate of the side and the extent it spans along the wall.
    fn geometry(self, r: &RoomSpec) -> (f64, [f64; 2]) {
        match self {
            Side::XMin => (r.x[0], r.y),
            Side::XMax => (r.x[1], r.y),
            Side::YMin => (r.y[0], r.x),
            Side::YMax => (r.y[1], r.x),
        }
    }

    /// Outward direction sign (+1 when the wall's exterior is at larger coordinates).
    fn outward(self) -> f64 {
        match self {
            Side::XMin | Side::YMin => -1.0,
            Side::XMax | Side::YMax => 1.0,
        }
    }

    fn axis_vector(self) -> Vector3<f64> {
        match self {
            Side::XMin | Side::XMax => Vector3::x(),
            Side::YMin | Side::YMax => Vector3::y(),
        }
    }

    /// A point on the wall line at `coord` and position `along` the wall.
    fn point(self, coord: f64, along: f64) -> Vector3<f64> {
        match self {
            Side::XMin | Side::XMax => Vector3::new(coord, along, 0.0),
            Side::YMin | Side::YMax => Vector3::new(along, coord, 0.0),
        }
    }
}

/// Plane at `coord` on `side` whose supplied normal faces `facing` (+1/-1
/// along the side's axis) before the sign convention is applied.
fn side_plane(side: Side, coord: f64, facing: f64) -> PlaneCP {
    let n = side.axis_vector() * facing;
    PlaneCP::new(n, coord * facing, FrameId::B).expect("axis normals are unit")
}

fn overlap(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[1].min(b[1]) - a[0].max(b[0])
}

fn surface_id(room: &str, side: Side) -> String {
    format!("{room}/{}", side.tag())
}

struct Adjacency {
    room_a: usize,
    side_a: Side,
    room_b: usize,
    overlap_len: f64,
    overlap: [f64; 2],
}

fn validate_spec(spec: &FloorplanSpec) -> Result<(), AGraphError> {
    let t = spec.wall_thickness;
    if !(t > 0.0 && t.is_finite()) {
        return Err(AGraphError::InvalidFloorplan(format!(
            "wall thickness {t} must be positive"
        )));
    }
    if spec.rooms.is_empty() {
        return Err(AGraphError::InvalidFloorplan("no rooms".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for r in &spec.rooms {
        if !ids.insert(r.id.as_str()) {
            return Err(AGraphError::InvalidFloorplan(format!("duplicate room id '{}'", r.id)));
        }
        for (name, ext) in [("x", r.x), ("y", r.y)] {
            if ext[1].is_nan() || ext[0].is_nan() || ext[1] - ext[0] <= 2.0 * t {
                return Err(AGraphError::InvalidFloorplan(format!(
                    "room '{}' {name}-extent {:?} is degenerate for wall thickness {t}",
                    r.id, ext
                )));
            }
        }
    }
    for (i, a) in spec.rooms.iter().enumerate() {
        for b in &spec.rooms[i + 1..] {
            if overlap(a.x, b.x) > 1e-9 && overlap(a.y, b.y) > 1e-9 {
                return Err(AGraphError::InvalidFloorplan(format!(
                    "rooms '{}' and '{}' overlap",
                    a.id, b.id
                )));
            }
        }
    }
    Ok(())
}

fn adjacencies(spec: &FloorplanSpec) -> Vec<Adjacency> {
    let t = spec.wall_thickness;
    let tol = 1e-6 + 0.25 * t;
    let mut out = Vec::new();
    for (i, a) in spec.rooms.iter().enumerate() {
        for (j, b) in spec.rooms.iter().enumerate() {
            if i == j {
                continue;
            }
            for side in [Side::XMax, Side::YMax] {
                let (ca, span_a) = side.geometry(a);
                let (cb, span_b) = side.opposite().geometry(b);
                let len = overlap(span_a, span_b);
                if ((cb - ca) - t).abs() <= tol && len > 1e-6 {
                    out.push(Adjacency {
                        room_a: i,
                        side_a: side,
                        room_b: j,
                        overlap_len: len,
                        overlap: [span_a[0].max(span_b[0]), span_a[1].min(span_b[1])],
                    });
                }
            }
        }
    }
    out
}

/// Builds the architectural graph for a floorplan.
///
/// Every room contributes four interior surfaces. Facing surfaces of
/// neighbouring rooms one wall thickness apart form a shared wall (each
/// surface joins the neighbour with the longest common segment, when that
/// choice is mutual); every other surface is paired with a synthetic exterior
/// twin so the walls layer covers all room surfaces.
pub fn build_agraph(spec: &FloorplanSpec) -> Result<LayeredGraph, AGraphError> {
    validate_spec(spec)?;
    let t = spec.wall_thickness;
    let mut g = LayeredGraph::new(GraphRole::Architectural, FrameId::B);

    for r in &spec.rooms {
        let mut ids = Vec::with_capacity(4);
        for side in Side::ALL {
            let (coord, _) = side.geometry(r);
            let mut s = WallSurface::new(surface_id(&r.id, side), side_plane(side, coord, -side.outward()));
            s.owner_room = Some(r.id.clone());
            g.edges.push(Edge::RoomSurface {
                room: r.id.clone(),
                surface: s.id.clone(),
            });
            ids.push(s.id.clone());
            g.wall_surfaces.insert(s.id.clone(), s);
        }
        let p = |k: usize| g.wall_surfaces[&ids[k]].plane;
        let center = room_center(&p(0), &p(1), &p(2), &p(3))?;
        g.rooms.insert(
            r.id.clone(),
            Room {
                id: r.id.clone(),
                center,
                kind: RoomKind::FourWall,
                surfaces: ids,
                frame: FrameId::B,
            },
        );
    }

    // Mutual best neighbour per surface.
    let adj = adjacencies(spec);
    let mut best: BTreeMap<(usize, Side), (f64, usize)> = BTreeMap::new();
    for (k, a) in adj.iter().enumerate() {
        let keys = [(a.room_a, a.side_a), (a.room_b, a.side_a.opposite())];
        for key in keys {
            let better = match best.get(&key) {
                Some((len, _)) => a.overlap_len > *len + 1e-9,
                None => true,
            };
            if better {
                best.insert(key, (a.overlap_len, k));
            }
        }
    }
    let mut paired: BTreeMap<(usize, Side), usize> = BTreeMap::new();
    for (k, a) in adj.iter().enumerate() {
        let ka = (a.room_a, a.side_a);
        let kb = (a.room_b, a.side_a.opposite());
        if best.get(&ka).map(|b| b.1) == Some(k) && best.get(&kb).map(|b| b.1) == Some(k) {
            paired.insert(ka, k);
            paired.insert(kb, k);
        }
    }

    let mut wall_count = 0usize;
    let mut add_wall = |g: &mut LayeredGraph, s1: String, s2: String, start: Vector3<f64>| -> Result<(), AGraphError> {
        let id = format!("wall_{wall_count:03}");
        wall_count += 1;
        let p1 = g.wall_surfaces[&s1].plane;
        let p2 = g.wall_surfaces[&s2].plane;
        let center = wall_center(&p1, &p2, &start)?;
        for s in [&s1, &s2] {
            g.wall_surfaces.get_mut(s).expect("surface exists").owner_wall = Some(id.clone());
            g.edges.push(Edge::WallSurface {
                wall: id.clone(),
                surface: s.clone(),
            });
        }
        g.walls.insert(
            id.clone(),
            Wall {
                id,
                center,
                surfaces: [s1, s2],
                start_point: start,
                frame: FrameId::B,
            },
        );
        Ok(())
    };

    for (i, r) in spec.rooms.iter().enumerate() {
        for side in Side::ALL {
            let (coord, span) = side.geometry(r);
            match paired.get(&(i, side)) {
                Some(&k) => {
                    let a = &adj[k];
                    // Emit each shared wall once, from its lower-coordinate room.
                    if a.room_a != i {
                        continue;
                    }
                    let other = &spec.rooms[a.room_b];
                    let mid = 0.5 * (a.overlap[0] + a.overlap[1]);
                    let start = side.point(coord + 0.5 * t, mid);
                    add_wall(
                        &mut g,
                        surface_id(&r.id, side),
                        surface_id(&other.id, side.opposite()),
                        start,
                    )?;
                }
                None => {
                    let ext_coord = coord + side.outward() * t;
                    let ext_id = format!("{}/ext", surface_id(&r.id, side));
                    let ext = WallSurface::new(ext_id.clone(), side_plane(side, ext_coord, side.outward()));
                    g.wall_surfaces.insert(ext_id.clone(), ext);
                    let start = side.point(coord + side.outward() * 0.5 * t, 0.5 * (span[0] + span[1]));
                    add_wall(&mut g, surface_id(&r.id, side), ext_id, start)?;
                }
            }
        }
    }

    let adjacent = |a: usize, b: usize| {
        adj.iter()
            .any(|x| (x.room_a == a && x.room_b == b) || (x.room_a == b && x.room_b == a))
    };
    let index: BTreeMap<&str, usize> = spec.rooms.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    for d in &spec.doorways {
        let ia = index.get(d.rooms[0].as_str());
        let ib = index.get(d.rooms[1].as_str());
        let (ia, ib) = match (ia, ib) {
            (Some(a), Some(b)) if a != b => (*a, *b),
            _ => {
                return Err(AGraphError::InvalidDoorway(format!(
                    "doorway '{}' must name two distinct known rooms, got {:?}",
                    d.id, d.rooms
                )))
            }
        };
        if !adjacent(ia, ib) {
            return Err(AGraphError::InvalidDoorway(format!(
                "doorway '{}' joins non-adjacent rooms {:?}",
                d.id, d.rooms
            )));
        }
        let position = Vector3::from(d.position);
        let offsets = [ia, ib].map(|k| position - lift(&g.rooms[&spec.rooms[k].id].center));
        for room in &d.rooms {
            g.edges.push(Edge::DoorwayRoom {
                doorway: d.id.clone(),
                room: room.clone(),
            });
        }
        g.doorways.insert(
            d.id.clone(),
            Doorway {
                id: d.id.clone(),
                position,
                rooms: d.rooms.clone(),
                offsets,
            },
        );
    }

    let centers: Vec<Vector2<f64>> = g.rooms.values().map(|r| r.center).collect();
    let floor_center = centers.iter().sum::<Vector2<f64>>() / centers.len() as f64;
    let floor_id = "floor_0".to_string();
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
            center: floor_center,
            rooms: g.rooms.keys().cloned().collect(),
        },
    );
    debug_assert!(g.validate().is_ok(), "{:?}", g.validate());
    Ok(g)
}

/// Surfaces of `g` owned by a room, in that room's listed order.
pub fn room_planes<'a>(g: &'a LayeredGraph, room: &Room) -> Vec<&'a PlaneCP> {
    room.surfaces.iter().map(|s| &g.wall_surfaces[s].plane).collect()
}

/// Ids of surfaces that bound some room, excluding exterior twins.
pub fn room_surface_ids(g: &LayeredGraph) -> Vec<NodeId> {
    g.wall_surfaces
        .values()
        .filter(|s| s.owner_room.is_some())
        .map(|s| s.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    use crate::geometry::FrameTransform;

    fn xplane(x: f64) -> PlaneCP {
        PlaneCP::new(Vector3::x(), x, FrameId::B).unwrap()
    }

    fn yplane(y: f64) -> PlaneCP {
        PlaneCP::new(Vector3::y(), y, FrameId::B).unwrap()
    }

    fn room(id: &str, x: [f64; 2], y: [f64; 2]) -> RoomSpec {
        RoomSpec { id: id.into(), x, y }
    }

    #[test]
    fn wall_center_examples() {
        let c = wall_center(&xplane(2.0), &xplane(4.0), &Vector3::new(3.0, 5.0, 0.0)).unwrap();
        assert_abs_diff_eq!(c, Vector3::new(3.0, 5.0, 0.0), epsilon = 1e-12);

        let neg = PlaneCP::new(-Vector3::x(), 1.0, FrameId::B).unwrap();
        let c = wall_center(&xplane(1.0), &neg, &Vector3::new(0.0, 2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(c, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);

        let c = wall_center(&xplane(2.0), &xplane(4.0), &Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(c, Vector3::new(3.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn wall_center_rejects_mixed_axes() {
        let err = wall_center(&xplane(2.0), &yplane(4.0), &Vector3::zeros()).unwrap_err();
        assert!(matches!(err, AGraphError::AxisMismatch(_)));
    }

    #[test]
    fn wall_factor_offsets() {
        let (p1, p2) = (xplane(2.0), xplane(4.0));
        let start = Vector3::new(0.0, 1.0, 0.0);
        let exact = wall_center(&p1, &p2, &start).unwrap();
        let mut wall = Wall {
            id: "w".into(),
            center: exact,
            surfaces: ["a".into(), "b".into()],
            start_point: start,
            frame: FrameId::B,
        };
        let w = FactorWeights::default();
        let r = wall_factor(&wall, &p1, &p2, &w).unwrap();
        assert_eq!(r.value.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(r.information, DMatrix::identity(3, 3));
        wall.center += Vector3::new(0.1, 0.0, 0.0);
        let r = wall_factor(&wall, &p1, &p2, &w).unwrap();
        assert_abs_diff_eq!(r.value[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn room_center_examples() {
        let c = room_center(&xplane(0.0), &xplane(4.0), &yplane(0.0), &yplane(6.0)).unwrap();
        assert_abs_diff_eq!(c, Vector2::new(2.0, 3.0), epsilon = 1e-12);
        let xm = PlaneCP::new(-Vector3::x(), 1.0, FrameId::B).unwrap();
        let ym = PlaneCP::new(-Vector3::y(), 1.0, FrameId::B).unwrap();
        let c = room_center(&xm, &xplane(1.0), &ym, &yplane(1.0)).unwrap();
        assert_abs_diff_eq!(c, Vector2::new(0.0, 0.0), epsilon = 1e-12);
        let c = room_center(&xplane(2.0), &xplane(4.0), &yplane(10.0), &yplane(16.0)).unwrap();
        assert_abs_diff_eq!(c, Vector2::new(3.0, 13.0), epsilon = 1e-12);
    }

    #[test]
    fn room_center_rejects_axis_mismatch() {
        let err = room_center(&xplane(0.0), &yplane(4.0), &yplane(0.0), &yplane(6.0)).unwrap_err();
        assert!(matches!(err, AGraphError::AxisMismatch(_)));
    }

    #[test]
    fn single_room_plan() {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![room("r", [0.0, 4.0], [0.0, 6.0])],
            doorways: vec![],
        };
        let g = build_agraph(&spec).unwrap();
        g.validate().unwrap();
        assert_eq!(room_surface_ids(&g).len(), 4);
        assert_eq!(g.walls.len(), 4);
        assert_eq!(g.rooms["r"].center, Vector2::new(2.0, 3.0));
        assert_eq!(g.floors["floor_0"].center, Vector2::new(2.0, 3.0));
        // Every exterior twin sits one thickness outside its room surface.
        let ext = &g.wall_surfaces["r/xmax/ext"].plane;
        assert_abs_diff_eq!(ext.dist, 4.2, epsilon = 1e-12);
        let west = &g.wall_surfaces["r/xmin/ext"].plane;
        assert_abs_diff_eq!(west.closest_point(), Vector3::new(-0.2, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn shared_wall_between_two_rooms() {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![room("a", [0.0, 4.0], [0.0, 4.0]), room("b", [4.2, 8.2], [0.0, 4.0])],
            doorways: vec![DoorwaySpec {
                id: "d".into(),
                position: [4.1, 2.0, 1.0],
                rooms: ["a".into(), "b".into()],
            }],
        };
        let g = build_agraph(&spec).unwrap();
        let shared: Vec<&Wall> = g
            .walls
            .values()
            .filter(|w| w.surfaces.iter().all(|s| !s.ends_with("/ext")))
            .collect();
        assert_eq!(shared.len(), 1);
        let w = shared[0];
        assert_eq!(w.surfaces, ["a/xmax".to_string(), "b/xmin".to_string()]);
        let xs: Vec<f64> = w.surfaces.iter().map(|s| g.wall_surfaces[s].plane.dist).collect();
        assert_abs_diff_eq!(xs[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[1], 4.2, epsilon = 1e-12);
        assert_abs_diff_eq!(w.center, Vector3::new(4.1, 2.0, 0.0), epsilon = 1e-12);
        assert_eq!(g.walls.len(), 7);
    }

    #[test]
    fn empty_plan_is_invalid() {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![],
            doorways: vec![],
        };
        assert!(matches!(build_agraph(&spec), Err(AGraphError::InvalidFloorplan(_))));
    }

    #[test]
    fn overlapping_rooms_are_invalid() {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![room("a", [0.0, 4.0], [0.0, 4.0]), room("b", [3.0, 8.0], [1.0, 4.0])],
            doorways: vec![],
        };
        assert!(matches!(build_agraph(&spec), Err(AGraphError::InvalidFloorplan(_))));
    }

    #[test]
    fn doorway_between_distant_rooms_is_invalid() {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![room("a", [0.0, 4.0], [0.0, 4.0]), room("b", [6.0, 9.0], [0.0, 4.0])],
            doorways: vec![DoorwaySpec {
                id: "d".into(),
                position: [5.0, 2.0, 0.0],
                rooms: ["a".into(), "b".into()],
            }],
        };
        assert!(matches!(build_agraph(&spec), Err(AGraphError::InvalidDoorway(_))));
    }

    fn three_rooms() -> LayeredGraph {
        let spec = FloorplanSpec {
            wall_thickness: 0.2,
            rooms: vec![
                room("a", [0.0, 4.0], [0.0, 4.0]),
                room("b", [4.2, 8.2], [0.0, 4.0]),
                room("c", [0.0, 4.0], [4.2, 9.0]),
            ],
            doorways: vec![
                DoorwaySpec {
                    id: "ab".into(),
                    position: [4.1, 2.0, 0.0],
                    rooms: ["a".into(), "b".into()],
                },
                DoorwaySpec {
                    id: "ac".into(),
                    position: [2.0, 4.1, 0.0],
                    rooms: ["a".into(), "c".into()],
                },
            ],
        };
        build_agraph(&spec).unwrap()
    }

    #[test]
    fn doorway_factor_examples() {
        let g = three_rooms();
        let w = FactorWeights::default();
        let d = &g.doorways["ab"];
        let (ra, mut rb) = (g.rooms["a"].clone(), g.rooms["b"].clone());
        let r = doorway_factor(d, &ra, &rb, &w).unwrap();
        assert_eq!(r.value.as_slice(), &[0.0, 0.0, 0.0]);
        rb.center += Vector2::new(0.3, 0.0);
        let r = doorway_factor(d, &ra, &rb, &w).unwrap();
        assert_abs_diff_eq!(r.value[0], -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value[1], 0.0, epsilon = 1e-12);
        let err = doorway_factor(d, &ra, &g.rooms["c"], &w).unwrap_err();
        assert!(matches!(err, AGraphError::InvalidDoorway(_)));
    }

    #[test]
    fn built_graphs_are_self_consistent() {
        let g = three_rooms();
        let w = FactorWeights::default();
        for wall in g.walls.values() {
            let p1 = g.wall_surfaces[&wall.surfaces[0]].plane;
            let p2 = g.wall_surfaces[&wall.surfaces[1]].plane;
            let r = wall_factor(wall, &p1, &p2, &w).unwrap();
            assert_eq!(r.squared_norm(), 0.0, "wall {}", wall.id);
        }
        for d in g.doorways.values() {
            let r = doorway_factor(d, &g.rooms[&d.rooms[0]], &g.rooms[&d.rooms[1]], &w).unwrap();
            assert_eq!(r.squared_norm(), 0.0);
        }
        // Every room surface has exactly one owning room.
        for id in room_surface_ids(&g) {
            let owners = g.rooms.values().filter(|r| r.surfaces.contains(&id)).count();
            assert_eq!(owners, 1);
        }
    }

    #[test]
    fn weights_override_information() {
        let mut w = FactorWeights::default();
        w.diagonals.insert(FactorKind::Wall, vec![2.0, 3.0, 4.0]);
        let info = w.information(FactorKind::Wall, 3);
        assert_eq!(info[(1, 1)], 3.0);
        assert_eq!(w.information(FactorKind::Doorway, 3), DMatrix::identity(3, 3));
    }

    /// Independent wall-center route: project `s` onto the mid-plane of two
    /// parallel planes written as `n . x = c`.
    fn mid_plane_projection(p1: &PlaneCP, p2: &PlaneCP, s: &Vector3<f64>) -> Vector3<f64> {
        let n = p1.normal;
        let c2 = if p2.normal.dot(&n) > 0.0 { p2.dist } else { -p2.dist };
        let mid = 0.5 * (p1.dist + c2);
        s - (n.dot(s) - mid) * n
    }

    fn wall_planes() -> impl Strategy<Value = (PlaneCP, PlaneCP, Vector3<f64>)> {
        (
            -PI..PI,
            0.5..20.0f64,
            0.05..1.0f64,
            -10.0..10.0f64,
            -10.0..10.0f64,
            -1.0..1.0f64,
        )
            .prop_map(|(az, d, thick, sx, sy, sz)| {
                let n = Vector3::new(az.cos(), az.sin(), 0.0);
                let p1 = PlaneCP::new(n, d, FrameId::M).unwrap();
                let p2 = PlaneCP::new(n, d + thick, FrameId::M).unwrap();
                (p1, p2, Vector3::new(sx, sy, sz))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn wall_center_matches_mid_plane_oracle((p1, p2, s) in wall_planes()) {
            prop_assume!(p1.axis() == p2.axis());
            let c = wall_center(&p1, &p2, &s).unwrap();
            let oracle = mid_plane_projection(&p1, &p2, &s);
            prop_assert!((c - oracle).norm() < 1e-9);
        }

        #[test]
        fn wall_center_lies_between_planes((p1, p2, s) in wall_planes()) {
            prop_assume!(p1.axis() == p2.axis());
            let c = wall_center(&p1, &p2, &s).unwrap();
            let a = p1.signed_distance(&c);
            let b = p2.signed_distance(&c);
            prop_assert!(a * b <= 1e-18);
            let sep = (p2.dist - p1.dist).abs();
            prop_assert!(a.abs() <= sep / 2.0 + 1e-9);
            prop_assert!(b.abs() <= sep / 2.0 + 1e-9);
        }

        #[test]
        fn wall_center_is_equivariant((p1, p2, s) in wall_planes(),
                                      tx in -15.0..15.0f64, ty in -15.0..15.0f64, yaw in -PI..PI) {
            let t = FrameTransform::new(tx, ty, yaw);
            let (q1, q2) = (t.transform_plane(&p1), t.transform_plane(&p2));
            prop_assume!(p1.axis() == p2.axis() && q1.axis() == q2.axis());
            let before = wall_center(&p1, &p2, &s).unwrap();
            let after = wall_center(&q1, &q2, &t.apply_point3(&s)).unwrap();
            prop_assert!((after - t.apply_point3(&before)).norm() < 1e-9);
        }

        #[test]
        fn wall_factor_matches_oracle((p1, p2, s) in wall_planes(), dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
            prop_assume!(p1.axis() == p2.axis());
            let center = mid_plane_projection(&p1, &p2, &s) + Vector3::new(dx, dy, 0.0);
            let wall = Wall { id: "w".into(), center, surfaces: ["a".into(), "b".into()], start_point: s, frame: FrameId::M };
            let r = wall_factor(&wall, &p1, &p2, &FactorWeights::default()).unwrap();
            prop_assert!((r.value[0] - dx).abs() < 1e-9 && (r.value[1] - dy).abs() < 1e-9 && r.value[2].abs() < 1e-9);
        }
    }
}

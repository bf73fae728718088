//! Layered graph container shared by architectural, situational and merged
//! graphs.
//!
//! Node collections are keyed by their opaque string id and serialize as
//! JSON arrays ordered by id, so the on-disk form is stable.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Axis, FrameId, FrameTransform, PlaneCP, Pose2};

pub type NodeId = String;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("dangling reference: {from} refers to missing {kind} '{id}'")]
    DanglingReference {
        from: String,
        kind: &'static str,
        id: String,
    },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("frame error: {0}")]
    Frame(String),
    #[error("layer error: {0}")]
    Layer(String),
    #[error("structure error: {0}")]
    Structure(String),
}

/// Which kind of graph a [`LayeredGraph`] holds; decides the allowed layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRole {
    /// Plan-derived graph: walls, surfaces, rooms, doorways, floor.
    Architectural,
    /// Robot-estimated graph: keyframes, surfaces, rooms, floor.
    Situational,
    /// Union of both after alignment.
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSurface {
    pub id: NodeId,
    pub plane: PlaneCP,
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_room: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_wall: Option<NodeId>,
}

impl WallSurface {
    pub fn new(id: impl Into<NodeId>, plane: PlaneCP) -> Self {
        Self {
            id: id.into(),
            axis: plane.axis(),
            plane,
            owner_room: None,
            owner_wall: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub id: NodeId,
    pub center: Vector3<f64>,
    pub surfaces: [NodeId; 2],
    pub start_point: Vector3<f64>,
    pub frame: FrameId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoomKind {
    FourWall,
    TwoWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: NodeId,
    pub center: Vector2<f64>,
    pub kind: RoomKind,
    /// Four-wall rooms list the two surfaces of one opposed pair, then the
    /// two of the other pair.
    pub surfaces: Vec<NodeId>,
    pub frame: FrameId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doorway {
    pub id: NodeId,
    pub position: Vector3<f64>,
    pub rooms: [NodeId; 2],
    /// Doorway position relative to each room center, as measured on the plan.
    pub offsets: [Vector3<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub id: NodeId,
    pub pose: Pose2,
    pub frame: FrameId,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub id: NodeId,
    pub center: Vector2<f64>,
    pub rooms: Vec<NodeId>,
}

/// Match level of a cross-graph association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLevel {
    Room,
    WallSurface,
}

/// One cross-graph node association.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchPair {
    pub level: MatchLevel,
    pub a_node: NodeId,
    pub s_node: NodeId,
}

impl MatchPair {
    pub fn new(level: MatchLevel, a_node: impl Into<NodeId>, s_node: impl Into<NodeId>) -> Self {
        Self {
            level,
            a_node: a_node.into(),
            s_node: s_node.into(),
        }
    }

    pub fn room(a_node: impl Into<NodeId>, s_node: impl Into<NodeId>) -> Self {
        Self::new(MatchLevel::Room, a_node, s_node)
    }

    pub fn surface(a_node: impl Into<NodeId>, s_node: impl Into<NodeId>) -> Self {
        Self::new(MatchLevel::WallSurface, a_node, s_node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edge {
    RoomSurface {
        room: NodeId,
        surface: NodeId,
    },
    WallSurface {
        wall: NodeId,
        surface: NodeId,
    },
    DoorwayRoom {
        doorway: NodeId,
        room: NodeId,
    },
    Odometry {
        from: NodeId,
        to: NodeId,
        delta: Pose2,
    },
    FloorRoom {
        floor: NodeId,
        room: NodeId,
    },
    /// Cross-graph association, only present in merged graphs.
    Match {
        a_node: NodeId,
        s_node: NodeId,
        level: MatchLevel,
    },
}

mod id_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub trait HasId {
        fn node_id(&self) -> &str;
    }

    pub fn serialize<T, S>(map: &BTreeMap<String, T>, serializer: S) -> Result<S::Ok, S::Error>
    where
        T: Serialize,
        S: Serializer,
    {
        serializer.collect_seq(map.values())
    }

    pub fn deserialize<'de, T, D>(deserializer: D) -> Result<BTreeMap<String, T>, D::Error>
    where
        T: Deserialize<'de> + HasId,
        D: Deserializer<'de>,
    {
        let items = Vec::<T>::deserialize(deserializer)?;
        let mut map = BTreeMap::new();
        for item in items {
            let id = item.node_id().to_string();
            if map.insert(id.clone(), item).is_some() {
                return Err(D::Error::custom(format!("duplicate id '{id}'")));
            }
        }
        Ok(map)
    }
}

use id_map::HasId;

macro_rules! has_id {
    ($($t:ty),*) => {
        $(impl HasId for $t { fn node_id(&self) -> &str { &self.id } })*
    };
}

has_id!(WallSurface, Wall, Room, Doorway, Keyframe, Floor);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredGraph {
    pub role: GraphRole,
    pub frame: FrameId,
    #[serde(default, with = "id_map")]
    pub keyframes: BTreeMap<NodeId, Keyframe>,
    #[serde(default, with = "id_map")]
    pub wall_surfaces: BTreeMap<NodeId, WallSurface>,
    #[serde(default, with = "id_map")]
    pub walls: BTreeMap<NodeId, Wall>,
    #[serde(default, with = "id_map")]
    pub rooms: BTreeMap<NodeId, Room>,
    #[serde(default, with = "id_map")]
    pub doorways: BTreeMap<NodeId, Doorway>,
    #[serde(default, with = "id_map")]
    pub floors: BTreeMap<NodeId, Floor>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl LayeredGraph {
    pub fn new(role: GraphRole, frame: FrameId) -> Self {
        Self {
            role,
            frame,
            keyframes: BTreeMap::new(),
            wall_surfaces: BTreeMap::new(),
            walls: BTreeMap::new(),
            rooms: BTreeMap::new(),
            doorways: BTreeMap::new(),
            floors: BTreeMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn surface(&self, id: &str) -> Option<&WallSurface> {
        self.wall_surfaces.get(id)
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.get(id)
    }

    pub fn four_wall_rooms(&self) -> impl Iterator<Item = &Room> {
        self.rooms.values().filter(|r| r.kind == RoomKind::FourWall)
    }

    /// Keyframes ordered by timestamp.
    pub fn trajectory(&self) -> Vec<&Keyframe> {
        let mut kfs: Vec<&Keyframe> = self.keyframes.values().collect();
        kfs.sort_by_key(|k| k.timestamp);
        kfs
    }

    fn all_ids(&self) -> impl Iterator<Item = &str> {
        self.keyframes
            .keys()
            .chain(self.wall_surfaces.keys())
            .chain(self.walls.keys())
            .chain(self.rooms.keys())
            .chain(self.doorways.keys())
            .chain(self.floors.keys())
            .map(String::as_str)
    }

    /// Checks referential integrity, frame tags, layer restrictions and the
    /// structural invariants of rooms, walls and the trajectory.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for id in self.all_ids() {
            if !seen.insert(id) {
                return Err(GraphError::DuplicateId(id.to_string()));
            }
        }
        self.check_keys()?;
        self.check_layers()?;
        self.check_frames()?;

        for s in self.wall_surfaces.values() {
            if s.axis != s.plane.axis() {
                return Err(GraphError::Structure(format!(
                    "surface '{}' axis label disagrees with its normal",
                    s.id
                )));
            }
            if let Some(r) = &s.owner_room {
                self.need_room(&s.id, r)?;
            }
            if let Some(w) = &s.owner_wall {
                if !self.walls.contains_key(w) {
                    return Err(dangling(&s.id, "wall", w));
                }
            }
        }
        for w in self.walls.values() {
            let a = self.need_surface(&w.id, &w.surfaces[0])?;
            let b = self.need_surface(&w.id, &w.surfaces[1])?;
            if a.axis != b.axis {
                return Err(GraphError::Structure(format!(
                    "wall '{}' joins surfaces of different axes",
                    w.id
                )));
            }
        }
        for r in self.rooms.values() {
            for s in &r.surfaces {
                self.need_surface(&r.id, s)?;
            }
            let expected = match r.kind {
                RoomKind::FourWall => 4,
                RoomKind::TwoWall => 2,
            };
            if r.surfaces.len() != expected {
                return Err(GraphError::Structure(format!(
                    "room '{}' has {} surfaces, expected {expected}",
                    r.id,
                    r.surfaces.len()
                )));
            }
            if r.kind == RoomKind::FourWall {
                self.check_four_wall(r)?;
            }
        }
        for d in self.doorways.values() {
            self.need_room(&d.id, &d.rooms[0])?;
            self.need_room(&d.id, &d.rooms[1])?;
            if d.rooms[0] == d.rooms[1] {
                return Err(GraphError::Structure(format!(
                    "doorway '{}' connects a room to itself",
                    d.id
                )));
            }
        }
        if self.floors.len() > 1 {
            return Err(GraphError::Structure(format!(
                "{} floors; at most one is supported",
                self.floors.len()
            )));
        }
        for f in self.floors.values() {
            for r in &f.rooms {
                self.need_room(&f.id, r)?;
            }
        }
        let traj = self.trajectory();
        for pair in traj.windows(2) {
            if pair[0].timestamp == pair[1].timestamp {
                return Err(GraphError::Structure(format!(
                    "keyframes '{}' and '{}' share timestamp {}",
                    pair[0].id, pair[1].id, pair[0].timestamp
                )));
            }
        }
        for e in &self.edges {
            self.check_edge(e)?;
        }
        Ok(())
    }

    fn check_keys(&self) -> Result<(), GraphError> {
        fn keyed<T: HasId>(map: &BTreeMap<NodeId, T>) -> Result<(), GraphError> {
            for (k, v) in map {
                if k != v.node_id() {
                    return Err(GraphError::Structure(format!(
                        "node '{}' stored under key '{k}'",
                        v.node_id()
                    )));
                }
            }
            Ok(())
        }
        keyed(&self.keyframes)?;
        keyed(&self.wall_surfaces)?;
        keyed(&self.walls)?;
        keyed(&self.rooms)?;
        keyed(&self.doorways)?;
        keyed(&self.floors)
    }

    fn check_layers(&self) -> Result<(), GraphError> {
        match self.role {
            GraphRole::Architectural => {
                if !self.keyframes.is_empty() {
                    return Err(GraphError::Layer("architectural graphs carry no keyframes".into()));
                }
                if self.frame != FrameId::B {
                    return Err(GraphError::Frame("architectural graphs live in frame B".into()));
                }
            }
            GraphRole::Situational => {
                if !self.doorways.is_empty() {
                    return Err(GraphError::Layer("situational graphs carry no doorways".into()));
                }
                if !self.walls.is_empty() {
                    return Err(GraphError::Layer("situational graphs carry no walls".into()));
                }
                if self.frame != FrameId::M {
                    return Err(GraphError::Frame("situational graphs live in frame M".into()));
                }
            }
            GraphRole::Merged => {
                if self.frame != FrameId::B {
                    return Err(GraphError::Frame("merged graphs live in frame B".into()));
                }
            }
        }
        if self.role != GraphRole::Merged && self.edges.iter().any(|e| matches!(e, Edge::Match { .. })) {
            return Err(GraphError::Layer("match edges only appear in merged graphs".into()));
        }
        Ok(())
    }

    fn check_frames(&self) -> Result<(), GraphError> {
        let f = self.frame;
        let bad = |what: &str, id: &str, found: FrameId| {
            GraphError::Frame(format!("{what} '{id}' is tagged {found}, graph frame is {f}"))
        };
        for s in self.wall_surfaces.values() {
            if s.plane.frame != f {
                return Err(bad("surface", &s.id, s.plane.frame));
            }
        }
        for w in self.walls.values() {
            if w.frame != f {
                return Err(bad("wall", &w.id, w.frame));
            }
        }
        for r in self.rooms.values() {
            if r.frame != f {
                return Err(bad("room", &r.id, r.frame));
            }
        }
        for k in self.keyframes.values() {
            if k.frame != f {
                return Err(bad("keyframe", &k.id, k.frame));
            }
        }
        Ok(())
    }

    fn check_four_wall(&self, room: &Room) -> Result<(), GraphError> {
        let n: Vec<Vector2<f64>> = room
            .surfaces
            .iter()
            .map(|s| self.wall_surfaces[s].plane.normal_xy())
            .collect();
        // Each listed pair must be near-parallel and the pairs near-perpendicular.
        let parallel = |a: &Vector2<f64>, b: &Vector2<f64>| a.dot(b).abs() > 30f64.to_radians().cos();
        if !parallel(&n[0], &n[1]) || !parallel(&n[2], &n[3]) || parallel(&n[0], &n[2]) {
            return Err(GraphError::Structure(format!(
                "room '{}' surfaces do not form two opposed pairs",
                room.id
            )));
        }
        // Plan rooms are axis-aligned, so the labels must split two and two.
        if self.role == GraphRole::Architectural {
            let axes: Vec<Axis> = room.surfaces.iter().map(|s| self.wall_surfaces[s].axis).collect();
            if axes != [Axis::X, Axis::X, Axis::Y, Axis::Y] {
                return Err(GraphError::Structure(format!(
                    "room '{}' needs two x-surfaces followed by two y-surfaces",
                    room.id
                )));
            }
        }
        Ok(())
    }

    fn check_edge(&self, e: &Edge) -> Result<(), GraphError> {
        let ctx = "edge";
        match e {
            Edge::RoomSurface { room, surface } => {
                self.need_room(ctx, room)?;
                self.need_surface(ctx, surface)?;
            }
            Edge::WallSurface { wall, surface } => {
                if !self.walls.contains_key(wall) {
                    return Err(dangling(ctx, "wall", wall));
                }
                self.need_surface(ctx, surface)?;
            }
            Edge::DoorwayRoom { doorway, room } => {
                if !self.doorways.contains_key(doorway) {
                    return Err(dangling(ctx, "doorway", doorway));
                }
                self.need_room(ctx, room)?;
            }
            Edge::Odometry { from, to, .. } => {
                for k in [from, to] {
                    if !self.keyframes.contains_key(k) {
                        return Err(dangling(ctx, "keyframe", k));
                    }
                }
            }
            Edge::FloorRoom { floor, room } => {
                if !self.floors.contains_key(floor) {
                    return Err(dangling(ctx, "floor", floor));
                }
                self.need_room(ctx, room)?;
            }
            Edge::Match { a_node, s_node, .. } => {
                let ids: BTreeSet<&str> = self.all_ids().collect();
                for n in [a_node, s_node] {
                    if !ids.contains(n.as_str()) {
                        return Err(dangling(ctx, "node", n));
                    }
                }
            }
        }
        Ok(())
    }

    fn need_room(&self, from: &str, id: &str) -> Result<&Room, GraphError> {
        self.rooms.get(id).ok_or_else(|| dangling(from, "room", id))
    }

    fn need_surface(&self, from: &str, id: &str) -> Result<&WallSurface, GraphError> {
        self.wall_surfaces.get(id).ok_or_else(|| dangling(from, "surface", id))
    }

    /// Applies a rigid planar motion to every node and retags it with
    /// `target`. Doorways and walls move with the graph.
    pub fn rigidly_moved(&self, t: &FrameTransform, target: FrameId) -> LayeredGraph {
        let mut g = self.clone();
        g.frame = target;
        for s in g.wall_surfaces.values_mut() {
            s.plane = t.act_on_plane(&s.plane, target);
            s.axis = s.plane.axis();
        }
        for w in g.walls.values_mut() {
            w.center = t.apply_point3(&w.center);
            w.start_point = t.apply_point3(&w.start_point);
            w.frame = target;
        }
        for r in g.rooms.values_mut() {
            r.center = t.apply_point2(&r.center);
            r.frame = target;
        }
        for d in g.doorways.values_mut() {
            d.position = t.apply_point3(&d.position);
            for o in d.offsets.iter_mut() {
                *o = t.rotate3(o);
            }
        }
        for k in g.keyframes.values_mut() {
            k.pose = t.apply_pose(&k.pose);
            k.frame = target;
        }
        for f in g.floors.values_mut() {
            f.center = t.apply_point2(&f.center);
        }
        g
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }
}

fn dangling(from: &str, kind: &'static str, id: &str) -> GraphError {
    GraphError::DanglingReference {
        from: from.to_string(),
        kind,
        id: id.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sgraph() -> LayeredGraph {
        let mut g = LayeredGraph::new(GraphRole::Situational, FrameId::M);
        let mk = |id: &str, n: [f64; 3], d: f64| {
            let mut s = WallSurface::new(id, PlaneCP::new(Vector3::from(n), d, FrameId::M).unwrap());
            s.owner_room = Some("r".into());
            s
        };
        for s in [
            mk("a", [1.0, 0.0, 0.0], 0.0),
            mk("b", [1.0, 0.0, 0.0], 4.0),
            mk("c", [0.0, 1.0, 0.0], 0.0),
            mk("d", [0.0, 1.0, 0.0], 6.0),
        ] {
            g.wall_surfaces.insert(s.id.clone(), s);
        }
        g.rooms.insert(
            "r".into(),
            Room {
                id: "r".into(),
                center: Vector2::new(2.0, 3.0),
                kind: RoomKind::FourWall,
                surfaces: vec!["a".into(), "b".into(), "c".into(), "d".into()],
                frame: FrameId::M,
            },
        );
        g
    }

    #[test]
    fn valid_graph_passes() {
        tiny_sgraph().validate().unwrap();
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let mut g = tiny_sgraph();
        g.edges.push(Edge::RoomSurface {
            room: "r".into(),
            surface: "nope".into(),
        });
        assert!(matches!(g.validate(), Err(GraphError::DanglingReference { .. })));
    }

    #[test]
    fn situational_graph_rejects_doorways() {
        let mut g = tiny_sgraph();
        g.doorways.insert(
            "d0".into(),
            Doorway {
                id: "d0".into(),
                position: Vector3::zeros(),
                rooms: ["r".into(), "r".into()],
                offsets: [Vector3::zeros(); 2],
            },
        );
        assert!(matches!(g.validate(), Err(GraphError::Layer(_))));
    }

    #[test]
    fn frame_tags_must_agree() {
        let mut g = tiny_sgraph();
        g.rooms.get_mut("r").unwrap().frame = FrameId::B;
        assert!(matches!(g.validate(), Err(GraphError::Frame(_))));
    }

    #[test]
    fn duplicate_ids_rejected_on_parse() {
        let g = tiny_sgraph();
        let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        let first = v["wall_surfaces"][0].clone();
        v["wall_surfaces"].as_array_mut().unwrap().push(first);
        let err = serde_json::from_value::<LayeredGraph>(v).unwrap_err();
        assert!(err.to_string().contains("duplicate id"));
    }

    #[test]
    fn json_roundtrip() {
        let g = tiny_sgraph();
        let back: LayeredGraph = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn timestamps_must_be_distinct() {
        let mut g = tiny_sgraph();
        for id in ["k0", "k1"] {
            g.keyframes.insert(
                id.into(),
                Keyframe {
                    id: id.into(),
                    pose: Pose2::new(0.0, 0.0, 0.0),
                    frame: FrameId::M,
                    timestamp: 3,
                },
            );
        }
        assert!(matches!(g.validate(), Err(GraphError::Structure(_))));
    }
}

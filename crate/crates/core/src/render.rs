//! Deterministic SVG snapshots of graphs, trajectories and matches.

use std::fmt::Write as _;

use nalgebra::Vector2;

use crate::geometry::{FrameTransform, Pose2};
use crate::graph::{LayeredGraph, Room, RoomKind};
use crate::matcher::MatchSet;

const SCALE: f64 = 40.0;
const MARGIN: f64 = 1.0;
const TICK: f64 = 0.3;

/// One graph to draw, moved into the drawing frame by `transform`.
#[derive(Debug, Clone)]
pub struct SceneGraph<'a> {
    pub graph: &'a LayeredGraph,
    pub transform: FrameTransform,
    /// CSS class prefix, e.g. `"a"` or `"s"`.
    pub class: String,
}

#[derive(Debug, Clone, Default)]
pub struct Scene<'a> {
    pub graphs: Vec<SceneGraph<'a>>,
    pub trajectory: Vec<Pose2>,
    pub links: Vec<[Vector2<f64>; 2]>,
}

impl<'a> Scene<'a> {
    pub fn add_graph(&mut self, graph: &'a LayeredGraph, transform: FrameTransform, class: &str) {
        self.graphs.push(SceneGraph {
            graph,
            transform,
            class: class.to_string(),
        });
    }

    /// Keyframes of `graph`, moved by `transform`, as the trajectory.
    pub fn trajectory_of(&mut self, graph: &LayeredGraph, transform: &FrameTransform) {
        self.trajectory = graph
            .trajectory()
            .iter()
            .map(|k| transform.apply_pose(&k.pose))
            .collect();
    }
}

fn intersect(n1: Vector2<f64>, d1: f64, n2: Vector2<f64>, d2: f64) -> Option<Vector2<f64>> {
    let det = n1.x * n2.y - n1.y * n2.x;
    if det.abs() < 1e-12 {
        return None;
    }
    Some(Vector2::new(
        (d1 * n2.y - d2 * n1.y) / det,
        (n1.x * d2 - n2.x * d1) / det,
    ))
}

struct Segment {
    from: Vector2<f64>,
    to: Vector2<f64>,
    tick: Vector2<f64>,
}

/// Room outline corners and one segment per surface, in the graph frame.
fn room_geometry(g: &LayeredGraph, room: &Room) -> Option<(Vec<Vector2<f64>>, Vec<Segment>)> {
    if room.kind != RoomKind::FourWall || room.surfaces.len() != 4 {
        return None;
    }
    let planes: Vec<(Vector2<f64>, f64)> = room
        .surfaces
        .iter()
        .map(|s| {
            let p = &g.wall_surfaces.get(s)?.plane;
            let n = p.normal_xy();
            let len = n.norm();
            Some((n / len, p.dist / len))
        })
        .collect::<Option<_>>()?;
    let c = |i: usize, j: usize| intersect(planes[i].0, planes[i].1, planes[j].0, planes[j].1);
    let (c02, c03, c12, c13) = (c(0, 2)?, c(0, 3)?, c(1, 2)?, c(1, 3)?);
    let corners = vec![c02, c03, c13, c12];
    let ends = [(c02, c03), (c12, c13), (c02, c12), (c03, c13)];
    let segments = ends
        .iter()
        .zip(&planes)
        .map(|(&(from, to), (n, _))| {
            let mid = 0.5 * (from + to);
            let outward = if n.dot(&(mid - room.center)) >= 0.0 { *n } else { -n };
            Segment {
                from,
                to,
                tick: outward,
            }
        })
        .collect();
    Some((corners, segments))
}

/// Endpoints of match links: room centers, and surface segment midpoints.
pub fn match_links(
    agraph: &LayeredGraph,
    a_transform: &FrameTransform,
    sgraph: &LayeredGraph,
    s_transform: &FrameTransform,
    matches: &MatchSet,
) -> Vec<[Vector2<f64>; 2]> {
    let anchor = |g: &LayeredGraph, t: &FrameTransform, id: &str| -> Option<Vector2<f64>> {
        if let Some(r) = g.room(id) {
            return Some(t.apply_point2(&r.center));
        }
        let s = g.surface(id)?;
        let owner = g.room(s.owner_room.as_deref()?)?;
        let foot = s.plane.project_xy(&owner.center);
        Some(t.apply_point2(&foot))
    };
    matches
        .pairs
        .iter()
        .filter_map(|p| {
            Some([
                anchor(agraph, a_transform, &p.a_node)?,
                anchor(sgraph, s_transform, &p.s_node)?,
            ])
        })
        .collect()
}

struct Canvas {
    min: Vector2<f64>,
    max: Vector2<f64>,
}

impl Canvas {
    fn px(&self, p: &Vector2<f64>) -> (f64, f64) {
        ((p.x - self.min.x) * SCALE, (self.max.y - p.y) * SCALE)
    }

    fn pt(&self, p: &Vector2<f64>) -> String {
        let (x, y) = self.px(p);
        format!("{x:.3},{y:.3}")
    }
}

/// Class, room outlines, wall centers and doorways of one graph in the shared frame.
type Body = (
    String,
    Vec<(Vec<Vector2<f64>>, Vec<Segment>)>,
    Vec<Vector2<f64>>,
    Vec<Vector2<f64>>,
);

pub fn render_svg(scene: &Scene) -> String {
    let mut bodies: Vec<Body> = Vec::new();
    let mut extent: Vec<Vector2<f64>> = Vec::new();
    for sg in &scene.graphs {
        let t = &sg.transform;
        let mut rooms = Vec::new();
        for room in sg.graph.rooms.values() {
            if let Some((corners, segments)) = room_geometry(sg.graph, room) {
                let corners: Vec<_> = corners.iter().map(|c| t.apply_point2(c)).collect();
                let segments: Vec<_> = segments
                    .into_iter()
                    .map(|s| Segment {
                        from: t.apply_point2(&s.from),
                        to: t.apply_point2(&s.to),
                        tick: t.rotate(&s.tick),
                    })
                    .collect();
                extent.extend(corners.iter().copied());
                rooms.push((corners, segments));
            }
        }
        let walls: Vec<_> = sg
            .graph
            .walls
            .values()
            .map(|w| t.apply_point2(&w.center.xy()))
            .collect();
        let doors: Vec<_> = sg
            .graph
            .doorways
            .values()
            .map(|d| t.apply_point2(&d.position.xy()))
            .collect();
        extent.extend(walls.iter().copied());
        extent.extend(doors.iter().copied());
        bodies.push((sg.class.clone(), rooms, walls, doors));
    }
    extent.extend(scene.trajectory.iter().map(|p| p.position()));
    for l in &scene.links {
        extent.extend(l.iter().copied());
    }

    let canvas = if extent.is_empty() {
        Canvas {
            min: Vector2::zeros(),
            max: Vector2::new(10.0, 10.0),
        }
    } else {
        let mut min = extent[0];
        let mut max = extent[0];
        for p in &extent {
            min = min.inf(p);
            max = max.sup(p);
        }
        Canvas {
            min: min - Vector2::repeat(MARGIN),
            max: max + Vector2::repeat(MARGIN),
        }
    };
    let size = (canvas.max - canvas.min) * SCALE;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.3}" height="{:.3}" viewBox="0 0 {:.3} {:.3}">"#,
        size.x, size.y, size.x, size.y
    );
    out.push_str(
        "<style>.room{fill:#f4efe6;stroke:none}.surface{stroke:#333;stroke-width:2}.tick{stroke:#c33;stroke-width:1}\
.wall{fill:#555}.doorway{fill:#2a7;stroke:none}.trajectory{fill:none;stroke:#26c;stroke-width:1.5}\
.match{stroke:#a3a;stroke-width:1;stroke-dasharray:4 3}</style>\n",
    );
    for (class, rooms, walls, doors) in &bodies {
        let _ = writeln!(out, r#"<g class="{class}">"#);
        for (corners, _) in rooms {
            let pts: Vec<String> = corners.iter().map(|c| canvas.pt(c)).collect();
            let _ = writeln!(out, r#"<polygon class="room" points="{}"/>"#, pts.join(" "));
        }
        for (_, segments) in rooms {
            for s in segments {
                let (x1, y1) = canvas.px(&s.from);
                let (x2, y2) = canvas.px(&s.to);
                let _ = writeln!(
                    out,
                    r#"<line class="surface" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#
                );
                let mid = 0.5 * (s.from + s.to);
                let (mx, my) = canvas.px(&mid);
                let (tx, ty) = canvas.px(&(mid + s.tick * TICK));
                let _ = writeln!(
                    out,
                    r#"<line class="tick" x1="{mx:.3}" y1="{my:.3}" x2="{tx:.3}" y2="{ty:.3}"/>"#
                );
            }
        }
        for w in walls {
            let (x, y) = canvas.px(w);
            let _ = writeln!(
                out,
                r#"<path class="wall" d="M{:.3},{:.3}h4v4h-4z"/>"#,
                x - 2.0,
                y - 2.0
            );
        }
        for d in doors {
            let (x, y) = canvas.px(d);
            let _ = writeln!(out, r#"<circle class="doorway" cx="{x:.3}" cy="{y:.3}" r="5.000"/>"#);
        }
        out.push_str("</g>\n");
    }
    if !scene.trajectory.is_empty() {
        let pts: Vec<String> = scene.trajectory.iter().map(|p| canvas.pt(&p.position())).collect();
        let _ = writeln!(out, r#"<polyline class="trajectory" points="{}"/>"#, pts.join(" "));
    }
    for l in &scene.links {
        let (x1, y1) = canvas.px(&l[0]);
        let (x2, y2) = canvas.px(&l[1]);
        let _ = writeln!(
            out,
            r#"<line class="match" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

//! Synthetic floorplans, simulation configs and benchmark suites.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agraph::{DoorwaySpec, FloorplanSpec, RoomSpec};
use crate::geometry::FrameTransform;
use crate::sgraph::SimConfig;

/// Dyadic sizes keep every derived coordinate exactly representable.
pub const WALL_THICKNESS: f64 = 0.25;
pub const MIN_ROOM_SIZE: f64 = 2.5;
/// Two rooms count as distinguishable when a dimension differs by this much.
pub const MIN_DIMENSION_GAP: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub rooms: usize,
    pub width: f64,
    pub height: f64,
    pub wall_thickness: f64,
}

impl PlanParams {
    pub fn for_rooms(rooms: usize) -> Self {
        let area = 20.0 * rooms as f64;
        let width = (area * 1.4).sqrt().round();
        Self {
            rooms,
            width,
            height: (area / width).round().max(MIN_ROOM_SIZE * 2.0),
            wall_thickness: WALL_THICKNESS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    x: [f64; 2],
    y: [f64; 2],
}

impl Rect {
    fn w(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    fn h(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    fn area(&self) -> f64 {
        self.w() * self.h()
    }
}

/// Whether every pair of rooms differs in footprint, up to a quarter turn.
pub fn is_asymmetric(rooms: &[RoomSpec]) -> bool {
    let dims: Vec<[f64; 2]> = rooms
        .iter()
        .map(|r| {
            let (w, h) = (r.x[1] - r.x[0], r.y[1] - r.y[0]);
            [w.min(h), w.max(h)]
        })
        .collect();
    for i in 0..dims.len() {
        for j in i + 1..dims.len() {
            let gap = (dims[i][0] - dims[j][0]).abs().max((dims[i][1] - dims[j][1]).abs());
            if gap < MIN_DIMENSION_GAP {
                return false;
            }
        }
    }
    true
}

fn guillotine<R: Rng>(p: &PlanParams, rng: &mut R) -> Option<Vec<Rect>> {
    let t = p.wall_thickness;
    let mut rects = vec![Rect {
        x: [0.0, p.width],
        y: [0.0, p.height],
    }];
    while rects.len() < p.rooms {
        rects.sort_by(|a, b| b.area().total_cmp(&a.area()));
        let r = rects[0];
        let vertical = if (r.w() - r.h()).abs() < 1.0 {
            rng.random_bool(0.5)
        } else {
            r.w() > r.h()
        };
        let span = if vertical { r.x } else { r.y };
        let len = span[1] - span[0];
        if len < 2.0 * MIN_ROOM_SIZE + t {
            return None;
        }
        let lo = (span[0] + MIN_ROOM_SIZE + t / 2.0).max(span[0] + 0.3 * len);
        let hi = (span[1] - MIN_ROOM_SIZE - t / 2.0).min(span[0] + 0.7 * len);
        if lo >= hi {
            return None;
        }
        let cut = (rng.random_range(lo..hi) * 8.0).round() / 8.0;
        if cut < lo || cut > hi {
            return None;
        }
        let (a, b) = if vertical {
            (
                Rect {
                    x: [r.x[0], cut - t / 2.0],
                    y: r.y,
                },
                Rect {
                    x: [cut + t / 2.0, r.x[1]],
                    y: r.y,
                },
            )
        } else {
            (
                Rect {
                    x: r.x,
                    y: [r.y[0], cut - t / 2.0],
                },
                Rect {
                    x: r.x,
                    y: [cut + t / 2.0, r.y[1]],
                },
            )
        };
        rects[0] = a;
        rects.push(b);
    }
    Some(rects)
}

/// Room pairs sharing a wall, with the doorway position on the wall.
fn adjacency(rooms: &[RoomSpec], t: f64) -> Vec<(usize, usize, [f64; 3])> {
    let tol = 1e-6;
    let mut out = Vec::new();
    for i in 0..rooms.len() {
        for j in i + 1..rooms.len() {
            let (a, b) = (&rooms[i], &rooms[j]);
            let overlap = |p: [f64; 2], q: [f64; 2]| (p[0].max(q[0]), p[1].min(q[1]));
            let door = |lo: f64, hi: f64| hi - lo >= 1.0;
            for (first, second) in [(a, b), (b, a)] {
                if (second.x[0] - first.x[1] - t).abs() < tol {
                    let (lo, hi) = overlap(first.y, second.y);
                    if door(lo, hi) {
                        out.push((i, j, [first.x[1] + t / 2.0, 0.5 * (lo + hi), 1.0]));
                    }
                }
                if (second.y[0] - first.y[1] - t).abs() < tol {
                    let (lo, hi) = overlap(first.x, second.x);
                    if door(lo, hi) {
                        out.push((i, j, [0.5 * (lo + hi), first.y[1] + t / 2.0, 1.0]));
                    }
                }
            }
        }
    }
    out
}

/// Random axis-aligned plan with `p.rooms` pairwise-distinguishable rooms
/// and a spanning tree of doorways.
pub fn generate_floorplan<R: Rng>(p: &PlanParams, rng: &mut R) -> FloorplanSpec {
    for _ in 0..10_000 {
        let Some(rects) = guillotine(p, rng) else { continue };
        let mut rects = rects;
        rects.sort_by(|a, b| a.y[0].total_cmp(&b.y[0]).then(a.x[0].total_cmp(&b.x[0])));
        let rooms: Vec<RoomSpec> = rects
            .iter()
            .enumerate()
            .map(|(i, r)| RoomSpec {
                id: format!("r{i}"),
                x: r.x,
                y: r.y,
            })
            .collect();
        if !is_asymmetric(&rooms) {
            continue;
        }
        let adj = adjacency(&rooms, p.wall_thickness);
        let mut seen = BTreeSet::from([0usize]);
        let mut queue = VecDeque::from([0usize]);
        let mut doorways = Vec::new();
        while let Some(u) = queue.pop_front() {
            for &(i, j, pos) in &adj {
                let v = if i == u {
                    j
                } else if j == u {
                    i
                } else {
                    continue;
                };
                if seen.insert(v) {
                    doorways.push(DoorwaySpec {
                        id: format!("d{}", doorways.len()),
                        position: pos,
                        rooms: [rooms[u].id.clone(), rooms[v].id.clone()],
                    });
                    queue.push_back(v);
                }
            }
        }
        if seen.len() != rooms.len() {
            continue;
        }
        return FloorplanSpec {
            wall_thickness: p.wall_thickness,
            rooms,
            doorways,
        };
    }
    panic!("could not generate a {}-room plan in {}x{}", p.rooms, p.width, p.height);
}

/// Uniform yaw and a translation within `±extent` on each axis.
pub fn random_transform<R: Rng>(rng: &mut R, extent: f64) -> FrameTransform {
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    FrameTransform::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        yaw,
    )
}

/// Rooms in walking order: breadth-first over doorways from a random start.
pub fn walk_order<R: Rng>(plan: &FloorplanSpec, rng: &mut R) -> Vec<String> {
    let mut nbrs: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in &plan.doorways {
        nbrs.entry(&d.rooms[0]).or_default().push(&d.rooms[1]);
        nbrs.entry(&d.rooms[1]).or_default().push(&d.rooms[0]);
    }
    let start = plan.rooms[rng.random_range(0..plan.rooms.len())].id.as_str();
    let mut order = vec![start.to_string()];
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let mut next: Vec<&str> = nbrs.get(u).cloned().unwrap_or_default();
        next.shuffle(rng);
        for v in next {
            if seen.insert(v) {
                order.push(v.to_string());
                queue.push_back(v);
            }
        }
    }
    for r in &plan.rooms {
        if seen.insert(&r.id) {
            order.push(r.id.clone());
        }
    }
    order
}

/// Noise levels for simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub plane_dist: f64,
    pub plane_angle: f64,
    pub room_center: f64,
    pub odom: [f64; 2],
}

impl NoiseLevels {
    pub const ZERO: NoiseLevels = NoiseLevels {
        plane_dist: 0.0,
        plane_angle: 0.0,
        room_center: 0.0,
        odom: [0.0, 0.0],
    };

    pub const NOMINAL: NoiseLevels = NoiseLevels {
        plane_dist: 0.05,
        plane_angle: 0.01,
        room_center: 0.02,
        odom: [0.02, 0.005],
    };
}

/// One benchmark case: a plan plus a simulation of a walk through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub plan: FloorplanSpec,
    pub sim: SimConfig,
}

/// The map origin lies within this distance of the start room center, on
/// each axis, as it would for a map anchored at the robot's first pose.
pub const START_OFFSET: f64 = 1.0;

pub fn random_dataset(id: impl Into<String>, rooms: usize, noise: NoiseLevels, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = generate_floorplan(&PlanParams::for_rooms(rooms), &mut rng);
    let visited_rooms = walk_order(&plan, &mut rng);
    let start = plan
        .rooms
        .iter()
        .find(|r| r.id == visited_rooms[0])
        .expect("walk starts in a plan room")
        .center();
    let local = random_transform(&mut rng, START_OFFSET);
    let transform = FrameTransform::new(start.x + local.translation.x, start.y + local.translation.y, local.yaw);
    Dataset {
        id: id.into(),
        plan,
        sim: SimConfig {
            true_transform: transform,
            visited_rooms,
            noise_plane_dist: noise.plane_dist,
            noise_plane_angle: noise.plane_angle,
            noise_room_center: noise.room_center,
            odom_step: 0.5,
            odom_noise: noise.odom,
            seed,
        },
    }
}

/// Room counts of the six-plan benchmark.
pub const SUITE_ROOMS: [usize; 6] = [4, 5, 6, 6, 7, 8];

pub fn benchmark_suite(noise: NoiseLevels, seed: u64) -> Vec<Dataset> {
    SUITE_ROOMS
        .iter()
        .enumerate()
        .map(|(i, &n)| random_dataset(format!("D{}", i + 1), n, noise, seed.wrapping_add(i as u64)))
        .collect()
}

/// Two identical square rooms plus a long hall next to one of them. Seen
/// alone, either square fits; the hall tells them apart.
pub fn symmetric_fixture() -> FloorplanSpec {
    let t = WALL_THICKNESS;
    FloorplanSpec {
        wall_thickness: t,
        rooms: vec![
            RoomSpec {
                id: "left".into(),
                x: [0.0, 4.0],
                y: [0.0, 4.0],
            },
            RoomSpec {
                id: "right".into(),
                x: [4.0 + t, 8.0 + t],
                y: [0.0, 4.0],
            },
            RoomSpec {
                id: "hall".into(),
                x: [0.0, 3.0],
                y: [4.0 + t, 11.0 + t],
            },
        ],
        doorways: vec![
            DoorwaySpec {
                id: "d0".into(),
                position: [4.0 + t / 2.0, 2.0, 1.0],
                rooms: ["left".into(), "right".into()],
            },
            DoorwaySpec {
                id: "d1".into(),
                position: [1.5, 4.0 + t / 2.0, 1.0],
                rooms: ["left".into(), "hall".into()],
            },
        ],
    }
}

/// Simulation of the fixture: the left square first, then the hall.
pub fn symmetric_sim(transform: FrameTransform, noise: NoiseLevels, seed: u64) -> SimConfig {
    SimConfig {
        true_transform: transform,
        visited_rooms: vec!["left".into(), "hall".into()],
        noise_plane_dist: noise.plane_dist,
        noise_plane_angle: noise.plane_angle,
        noise_room_center: noise.room_center,
        odom_step: 0.5,
        odom_noise: noise.odom,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agraph::build_agraph;

    #[test]
    fn generated_plans_build() {
        for seed in 0..30 {
            for n in 3..=8 {
                let d = random_dataset("x", n, NoiseLevels::ZERO, seed);
                assert_eq!(d.plan.rooms.len(), n);
                assert!(is_asymmetric(&d.plan.rooms));
                let g = build_agraph(&d.plan).unwrap();
                assert_eq!(g.rooms.len(), n);
                assert_eq!(g.doorways.len(), n - 1);
                assert_eq!(d.sim.visited_rooms.len(), n);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            random_dataset("x", 6, NoiseLevels::NOMINAL, 7),
            random_dataset("x", 6, NoiseLevels::NOMINAL, 7)
        );
        assert_ne!(
            random_dataset("x", 6, NoiseLevels::NOMINAL, 7),
            random_dataset("x", 6, NoiseLevels::NOMINAL, 8)
        );
    }

    #[test]
    fn fixture_builds() {
        let g = build_agraph(&symmetric_fixture()).unwrap();
        assert_eq!(g.rooms.len(), 3);
        assert!(!is_asymmetric(&symmetric_fixture().rooms));
    }
}

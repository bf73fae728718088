use graph_locate::dataset::{random_dataset, symmetric_fixture, symmetric_sim, NoiseLevels};
use graph_locate::geometry::FrameId;
use graph_locate::graph::{GraphRole, Room, RoomKind, WallSurface};
use graph_locate::matcher::{build_candidate_graph, combine_candidates, GraphFeatures, MatchSet};
use graph_locate::{
    build_agraph, match_graphs, simulate_sgraph, FrameTransform, LayeredGraph, MatchParams, MatchStatus, PlaneCP,
};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn truth_set(gt: &graph_locate::GroundTruth) -> MatchSet {
    MatchSet::new(gt.correspondence.clone())
}

#[test]
fn identity_self_match_recovers_every_node() {
    for seed in 0..8 {
        let ds = random_dataset("self", 3 + seed as usize % 4, NoiseLevels::ZERO, 300 + seed);
        let a = build_agraph(&ds.plan).unwrap();
        let mut sim = ds.sim.clone();
        sim.true_transform = FrameTransform::identity();
        let (s, gt) = simulate_sgraph(&a, &sim).unwrap();
        let o = match_graphs(&a, &s, &MatchParams::default()).unwrap();
        assert_eq!(o.status, MatchStatus::Unique, "seed {seed}");
        assert_eq!(o.best.unwrap(), truth_set(&gt), "seed {seed}");
    }
}

#[test]
fn zero_noise_simulation_matches_ground_truth() {
    for seed in 0..8 {
        let ds = random_dataset("zn", 4 + seed as usize % 4, NoiseLevels::ZERO, 400 + seed);
        let a = build_agraph(&ds.plan).unwrap();
        let (s, gt) = simulate_sgraph(&a, &ds.sim).unwrap();
        let o = match_graphs(&a, &s, &MatchParams::default()).unwrap();
        assert_eq!(o.status, MatchStatus::Unique);
        assert_eq!(o.best.unwrap(), truth_set(&gt));
    }
}

#[test]
fn empty_sgraph_is_no_match() {
    let ds = random_dataset("empty", 4, NoiseLevels::ZERO, 1);
    let a = build_agraph(&ds.plan).unwrap();
    let s = LayeredGraph::new(GraphRole::Situational, FrameId::M);
    let o = match_graphs(&a, &s, &MatchParams::default()).unwrap();
    assert_eq!(o.status, MatchStatus::NoMatch);
    assert!(o.best.is_none());
}

#[test]
fn two_wall_rooms_give_an_empty_candidate_graph() {
    let ds = random_dataset("tw", 4, NoiseLevels::ZERO, 2);
    let a = build_agraph(&ds.plan).unwrap();
    let mut s = LayeredGraph::new(GraphRole::Situational, FrameId::M);
    let mut ids = Vec::new();
    for (i, d) in [1.0, 3.0].into_iter().enumerate() {
        let id = format!("corridor/surface_{i}");
        let plane = PlaneCP::new(Vector3::new(if i == 0 { 1.0 } else { -1.0 }, 0.0, 0.0), d, FrameId::M).unwrap();
        let mut w = WallSurface::new(id.clone(), plane);
        w.owner_room = Some("corridor".into());
        s.wall_surfaces.insert(id.clone(), w);
        ids.push(id);
    }
    s.rooms.insert(
        "corridor".into(),
        Room {
            id: "corridor".into(),
            center: Vector2::new(2.0, 0.0),
            kind: RoomKind::TwoWall,
            surfaces: ids,
            frame: FrameId::M,
        },
    );
    let cg = build_candidate_graph(&GraphFeatures::of(&a), &GraphFeatures::of(&s), &MatchParams::default());
    assert!(cg.is_empty());
    assert_eq!(
        match_graphs(&a, &s, &MatchParams::default()).unwrap().status,
        MatchStatus::NoMatch
    );
}

#[test]
fn symmetric_room_keeps_both_twins() {
    let a = build_agraph(&symmetric_fixture()).unwrap();
    let mut sim = symmetric_sim(FrameTransform::new(3.0, -1.0, 1.1), NoiseLevels::ZERO, 4);
    sim.visited_rooms.truncate(1);
    let (s, _) = simulate_sgraph(&a, &sim).unwrap();
    let cg = build_candidate_graph(&GraphFeatures::of(&a), &GraphFeatures::of(&s), &MatchParams::default());
    let twins: Vec<&str> = cg
        .roots
        .iter()
        .flat_map(|r| r.rooms.iter())
        .filter(|n| !n.children.is_empty())
        .map(|n| n.pair.a_node.as_str())
        .collect();
    assert!(twins.contains(&"left") && twins.contains(&"right"), "{twins:?}");
}

#[test]
fn disambiguation_is_monotone() {
    for (i, yaw) in [0.0, 0.7, -2.0, 3.0].into_iter().enumerate() {
        let a = build_agraph(&symmetric_fixture()).unwrap();
        let full = symmetric_sim(FrameTransform::new(-2.0, 5.0, yaw), NoiseLevels::ZERO, i as u64);
        let mut seen_unique = false;
        for k in 1..=full.visited_rooms.len() {
            let (s, _) = simulate_sgraph(&a, &full.prefix(k)).unwrap();
            let status = match_graphs(&a, &s, &MatchParams::default()).unwrap().status;
            if seen_unique {
                assert_eq!(status, MatchStatus::Unique, "yaw {yaw}, {k} rooms");
            }
            seen_unique |= status == MatchStatus::Unique;
        }
        assert!(seen_unique);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn matching_is_frame_invariant(seed in 0u64..10_000, x in -30.0f64..30.0, y in -30.0f64..30.0, yaw in -3.1f64..3.1) {
        let ds = random_dataset("fi", 3 + (seed % 6) as usize, NoiseLevels::NOMINAL, seed);
        let a = build_agraph(&ds.plan).unwrap();
        let (s, _) = simulate_sgraph(&a, &ds.sim).unwrap();
        let moved = s.rigidly_moved(&FrameTransform::new(x, y, yaw), FrameId::M);
        let params = MatchParams::default();
        let o1 = match_graphs(&a, &s, &params).unwrap();
        let o2 = match_graphs(&a, &moved, &params).unwrap();
        prop_assert_eq!(o1.status, o2.status);
        prop_assert_eq!(o1.best, o2.best);
    }

    #[test]
    fn every_candidate_is_injective(seed in 0u64..10_000, rooms in 1usize..6) {
        let ds = random_dataset("inj", 6, NoiseLevels::NOMINAL, seed);
        let a = build_agraph(&ds.plan).unwrap();
        let (s, _) = simulate_sgraph(&a, &ds.sim.prefix(rooms)).unwrap();
        let params = MatchParams::default();
        let cg = build_candidate_graph(&GraphFeatures::of(&a), &GraphFeatures::of(&s), &params);
        for c in combine_candidates(&cg, params.max_combinations).unwrap_or_default() {
            prop_assert!(c.is_injective());
        }
        if let Some(best) = match_graphs(&a, &s, &params).unwrap().best {
            prop_assert!(best.is_injective());
        }
    }
}

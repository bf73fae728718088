use graph_locate::dataset::{random_dataset, symmetric_fixture, symmetric_sim, NoiseLevels};
use graph_locate::eval::{run_dataset, run_pipeline, run_suite, PipelineParams, SgraphSource};
use graph_locate::render::{match_links, render_svg, Scene};
use graph_locate::{build_agraph, simulate_sgraph, FrameTransform, MatchStatus};

#[test]
fn noiseless_five_room_pipeline() {
    let ds = random_dataset("five", 5, NoiseLevels::ZERO, 55);
    let out = run_dataset(&ds, &PipelineParams::default()).unwrap();
    let r = &out.report;
    assert_eq!(r.status, MatchStatus::Unique);
    assert!(r.unique_after_rooms.unwrap() <= 5);
    assert!(r.transform_error.unwrap().translation < 1e-9);
    assert!(r.transform_error.unwrap().yaw < 1e-9);
    assert!(r.ape.unwrap().rmse < 1e-9);
    assert_eq!((r.precision, r.recall), (Some(1.0), Some(1.0)));
    assert!(out.isgraph.is_some());
}

#[test]
fn symmetric_single_room_reports_ambiguous() {
    let a = build_agraph(&symmetric_fixture()).unwrap();
    let mut sim = symmetric_sim(FrameTransform::new(1.0, 2.0, -0.4), NoiseLevels::ZERO, 9);
    sim.visited_rooms.truncate(1);
    let out = run_pipeline("sym", &a, &SgraphSource::Simulate(sim), &PipelineParams::default()).unwrap();
    assert_eq!(out.report.status, MatchStatus::Ambiguous);
    assert!(out.isgraph.is_none());
    assert!(out.report.ape.is_none() && out.report.transform.is_none());
}

#[test]
fn given_sgraph_runs_without_metrics() {
    let ds = random_dataset("given", 4, NoiseLevels::NOMINAL, 66);
    let a = build_agraph(&ds.plan).unwrap();
    let (s, _) = simulate_sgraph(&a, &ds.sim).unwrap();
    let out = run_pipeline("given", &a, &SgraphSource::Given(s), &PipelineParams::default()).unwrap();
    assert_eq!(out.report.status, MatchStatus::Unique);
    assert!(out.report.transform.is_some());
    assert!(out.report.ape.is_none() && out.report.seed.is_none());
}

#[test]
fn suite_reports_are_sorted_by_dataset() {
    let sets: Vec<_> = [7, 3, 5, 1]
        .iter()
        .map(|&i| random_dataset(format!("p{i}"), 4, NoiseLevels::NOMINAL, i))
        .collect();
    let (suite, timings) = run_suite(&sets, &PipelineParams::default()).unwrap();
    let ids: Vec<&str> = suite.reports.iter().map(|r| r.dataset.as_str()).collect();
    assert_eq!(ids, ["p1", "p3", "p5", "p7"]);
    assert_eq!(timings.len(), 4);
    for r in &suite.reports {
        if let Some(a) = r.ape {
            assert!(a.rmse.is_finite() && a.mean.is_finite() && a.max.is_finite());
        }
    }
}

#[test]
fn dashed_links_match_pair_count() {
    let ds = random_dataset("svg", 4, NoiseLevels::NOMINAL, 21);
    let out = run_dataset(&ds, &PipelineParams::default()).unwrap();
    let a = build_agraph(&ds.plan).unwrap();
    let is = out.isgraph.unwrap();
    let best = out.outcome.best.unwrap();
    let mut scene = Scene::default();
    scene.add_graph(&a, FrameTransform::identity(), "a");
    scene.add_graph(&out.sgraph, is.transform, "s");
    scene.links = match_links(&a, &FrameTransform::identity(), &out.sgraph, &is.transform, &best);
    let svg = render_svg(&scene);
    assert_eq!(svg.matches("class=\"match\"").count(), best.len());
    assert_eq!(svg.matches("stroke-dasharray").count(), 1);
    assert_eq!(svg.matches("class=\"room\"").count(), 8);
}

#[test]
fn unvisited_rooms_never_appear() {
    let ds = random_dataset("part", 6, NoiseLevels::NOMINAL, 44);
    let a = build_agraph(&ds.plan).unwrap();
    let cfg = ds.sim.prefix(3);
    let (s, gt) = simulate_sgraph(&a, &cfg).unwrap();
    assert_eq!(s.rooms.len(), 3);
    for p in &gt.correspondence {
        let owner = a
            .room(&p.a_node)
            .map(|r| r.id.clone())
            .or_else(|| a.surface(&p.a_node).and_then(|w| w.owner_room.clone()))
            .unwrap();
        assert!(cfg.visited_rooms.contains(&owner), "{owner}");
    }
}

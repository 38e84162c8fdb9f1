use autowave::obstacles::sealed_center;
use autowave::pathsolver::{overlay, solve_path_observed, timeout_bound, StaticMap, TRAIL};
use autowave::pgm::{load_pgm, save_pgm, Encoding};
use autowave::wavesim::StopReason;
use autowave::{
    bfs_shortest, build_coupling, compare_path, make_fixture, solve_template, Cell, CouplingMap, CouplingMode,
    FixtureKind, GridParams, ObstacleGraph, Outcome, PathProblem, ReactionCurve, TemplateImage,
};

const T_P: f64 = 16.92;

fn problem(rows: usize, cols: usize, start: Cell, target: Cell) -> PathProblem {
    let mut p = PathProblem::new(GridParams::nominal(rows, cols), ReactionCurve::calibrated(), start, target);
    p.timeout.t_p_est = Some(T_P);
    p
}

fn graph(img: &TemplateImage) -> ObstacleGraph {
    let p = GridParams::nominal(img.rows(), img.cols());
    ObstacleGraph::from_coupling(&build_coupling(img, &p, CouplingMode::default()).unwrap())
}

#[test]
fn corridor_walks_straight_to_target() {
    let img = make_fixture(FixtureKind::Corridor, 1, 10, 0).unwrap();
    let s = solve_template(&problem(1, 10, Cell::new(0, 0), Cell::new(0, 9)), &img, CouplingMode::default()).unwrap();
    assert_eq!(s.outcome, Outcome::Reached);
    assert_eq!(s.path, (1..10).map(|c| Cell::new(0, c)).collect::<Vec<_>>());
    // each winner crosses roughly (remaining distance - 1) transition intervals after launch
    for (k, it) in s.iterations.iter().enumerate() {
        let d = 9 - k;
        assert!(it.crossing_time < (d as f64 + 2.0) * T_P, "iteration {k}: {}", it.crossing_time);
        assert!(!it.tie);
    }
    let sum: f64 = s.iterations.iter().map(|it| it.crossing_time).sum();
    assert!((sum - s.total_time).abs() < 1e-9);
}

#[test]
fn rooms_match_the_oracle() {
    for (seed, start, target) in [(3, Cell::new(0, 0), Cell::new(14, 14)), (8, Cell::new(14, 0), Cell::new(2, 11))] {
        let mut img = make_fixture(FixtureKind::Room, 15, 15, seed).unwrap();
        img.set(start, 255);
        img.set(target, 255);
        let g = graph(&img);
        let s = solve_template(&problem(15, 15, start, target), &img, CouplingMode::default()).unwrap();
        let report = compare_path(&s, &g).unwrap();
        assert!(report.equal && report.legal && report.progress, "seed {seed}: {report:?}");
        assert_eq!(report.oracle_steps, bfs_shortest(&g, start, target).unwrap());
    }
}

#[test]
fn sealed_target_stops_on_quiescence() {
    let img = make_fixture(FixtureKind::Sealed, 15, 15, 0).unwrap();
    let p = problem(15, 15, Cell::new(0, 0), sealed_center(15, 15));
    let map = build_coupling(&img, &p.params, CouplingMode::default()).unwrap();
    let bound = timeout_bound(&p.params, T_P, &map);
    let mut last = 0.0;
    let s = solve_path_observed(&p, &mut StaticMap(map), Some(10.0), &mut |_, st| {
        last = st.time;
        Ok(())
    })
    .unwrap();
    assert_eq!(s.outcome, Outcome::NoPath);
    assert_eq!(s.final_stop, Some(StopReason::Quiescence));
    assert!(s.path.is_empty());
    // the confined wave dies out long before the timeout bound
    assert!(last < bound / 5.0, "stopped at {last} ns, bound {bound} ns");
}

#[test]
fn tie_resolves_in_priority_order() {
    // start and target on a diagonal: the east and south neighbours are
    // equally far from the source
    let img = TemplateImage::filled(3, 3, 255);
    let s = solve_template(&problem(3, 3, Cell::new(0, 0), Cell::new(2, 2)), &img, CouplingMode::default()).unwrap();
    assert_eq!(s.outcome, Outcome::Reached);
    assert_eq!(s.steps(), 4);
    assert!(s.iterations[0].tie);
    assert_eq!(s.path[0], Cell::new(0, 1));
}

#[test]
fn repeated_solves_are_identical() {
    let img = make_fixture(FixtureKind::Maze, 11, 11, 2).unwrap();
    let p = problem(11, 11, Cell::new(1, 1), Cell::new(9, 9));
    let a = solve_template(&p, &img, CouplingMode::default()).unwrap();
    let b = solve_template(&p, &img, CouplingMode::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.outcome, Outcome::Reached);
    let report = compare_path(&a, &graph(&img)).unwrap();
    assert!(report.equal && report.legal && report.progress, "{report:?}");
}

#[test]
fn json_has_the_expected_shape() {
    let img = make_fixture(FixtureKind::Corridor, 1, 5, 0).unwrap();
    let s = solve_template(&problem(1, 5, Cell::new(0, 0), Cell::new(0, 3)), &img, CouplingMode::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
    assert_eq!(v["outcome"], "reached");
    assert_eq!(v["start"]["row"], 0);
    assert_eq!(v["path"].as_array().unwrap().len(), 3);
    assert_eq!(v["path"][2]["col"], 3);
    assert_eq!(v["iterations"].as_array().unwrap().len(), 3);
    assert!(v["iterations"][0]["crossing_time"].as_f64().unwrap() > 0.0);
    assert_eq!(v["t_p"], T_P);
    assert!(v["final_stop"].is_null());
}

#[test]
fn frames_are_tagged_by_iteration() {
    let p = problem(1, 6, Cell::new(0, 0), Cell::new(0, 5));
    let mut seen = Vec::new();
    let s = solve_path_observed(&p, &mut StaticMap(CouplingMap::uniform(1, 6, 25.0)), Some(20.0), &mut |k, st| {
        seen.push((k, st.time));
        Ok(())
    })
    .unwrap();
    assert_eq!(s.steps(), 5);
    assert!(seen.windows(2).all(|w| w[1].0 > w[0].0 || (w[1].0 == w[0].0 && w[1].1 > w[0].1)));
    let iterations: std::collections::BTreeSet<usize> = seen.iter().map(|f| f.0).collect();
    assert_eq!(iterations.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn overlay_survives_a_file_round_trip() {
    let img = make_fixture(FixtureKind::Corridor, 3, 6, 0).unwrap();
    let s = solve_template(&problem(3, 6, Cell::new(1, 0), Cell::new(1, 4)), &img, CouplingMode::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trail.pgm");
    save_pgm(&overlay(&img, &s), &path, Encoding::Plain).unwrap();
    let back = load_pgm(&path).unwrap();
    let trail: Vec<Cell> =
        (0..3).flat_map(|r| (0..6).map(move |c| Cell::new(r, c))).filter(|&c| back.get(c) == TRAIL).collect();
    assert_eq!(trail, (0..5).map(|c| Cell::new(1, c)).collect::<Vec<_>>());
}

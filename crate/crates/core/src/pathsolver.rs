//! Iterative wave path solver.
//!
//! Each iteration resets the lattice, excites the target cell and lets the
//! front run until it reaches a neighbour of the reference cell. The first
//! neighbour to cross the winner threshold becomes the next reference
//! cell. Because the front expands from the target at a constant speed
//! along the coupled region, the winner is always one step closer to the
//! target along a shortest route.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    excite, uniform_init, Cell, CouplingMap, Excitation, GridParams, GridState, Lattice, ACTIVE_SET_EPSILON,
};
use crate::obstacles::{build_coupling, CouplingMode, TemplateImage};
use crate::physics::{stable_states, ReactionCurve};
use crate::wavesim::{measure_tp, run_wave_observed, CrossingLog, StopReason, StopRule, Watch, WatchMode};

/// Multiplier applied to the full-traversal estimate in [`timeout_bound`].
pub const TIMEOUT_SAFETY: f64 = 1.5;
/// Quiescence window in units of the transition interval.
pub const QUIESCENCE_FACTOR: f64 = 5.0;
/// Tie window in units of the transition interval.
pub const TIE_FRACTION: f64 = 0.01;

/// Supplies the obstacle map and target for each iteration.
pub trait MapProvider {
    /// Coupling for iteration `iteration`, queried once before the target
    /// is excited.
    fn coupling(&mut self, iteration: usize) -> Result<CouplingMap>;

    /// Target for iteration `iteration`; `current` is the previous one.
    fn target(&mut self, _iteration: usize, current: Cell) -> Result<Cell> {
        Ok(current)
    }
}

/// A fixed obstacle map.
#[derive(Debug, Clone)]
pub struct StaticMap(pub CouplingMap);

impl MapProvider for StaticMap {
    fn coupling(&mut self, _iteration: usize) -> Result<CouplingMap> {
        Ok(self.0.clone())
    }
}

/// Episode limits. `t_p_est` is measured on a corridor when not given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeoutPolicy {
    pub t_p_est: Option<f64>,
    pub safety: f64,
    pub quiescence_factor: f64,
    pub tie_fraction: f64,
}

impl Default for TimeoutPolicy {
    fn default() -> Self {
        Self { t_p_est: None, safety: TIMEOUT_SAFETY, quiescence_factor: QUIESCENCE_FACTOR, tie_fraction: TIE_FRACTION }
    }
}

#[derive(Debug, Clone)]
pub struct PathProblem {
    pub params: GridParams,
    pub curve: ReactionCurve,
    /// Reference cell at the start.
    pub start: Cell,
    pub target: Cell,
    /// Winner threshold (V).
    pub threshold: f64,
    pub excitation: Excitation,
    pub timeout: TimeoutPolicy,
    /// Defaults to the number of cells.
    pub max_iterations: Option<usize>,
}

impl PathProblem {
    pub fn new(params: GridParams, curve: ReactionCurve, start: Cell, target: Cell) -> Self {
        Self {
            params,
            curve,
            start,
            target,
            threshold: crate::wavesim::DEFAULT_THRESHOLD,
            excitation: Excitation::default(),
            timeout: TimeoutPolicy::default(),
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Reached,
    NoPath,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationResult {
    pub reference: Cell,
    pub target: Cell,
    pub winner: Cell,
    /// Interpolated crossing time of the winner (ns).
    pub crossing_time: f64,
    /// Simulated episode length (ns).
    pub duration: f64,
    /// Another candidate crossed within the tie window.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSolution {
    pub outcome: Outcome,
    pub start: Cell,
    pub target: Cell,
    /// Winner cells in order; excludes the start.
    pub path: Vec<Cell>,
    pub iterations: Vec<IterationResult>,
    /// Sum of the winner crossing times (ns).
    pub total_time: f64,
    /// Transition interval used for the timeouts (ns).
    pub t_p: f64,
    /// How the final, unsuccessful episode ended, if there was one.
    pub final_stop: Option<StopReason>,
}

impl PathSolution {
    /// Path length in steps.
    pub fn steps(&self) -> usize {
        self.path.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Upper bound on one front traversal: every coupled cell visited in turn,
/// times a safety factor.
pub fn timeout_bound(params: &GridParams, t_p_est: f64, map: &CouplingMap) -> f64 {
    timeout_bound_with(params, t_p_est, map, TIMEOUT_SAFETY)
}

pub fn timeout_bound_with(params: &GridParams, t_p_est: f64, map: &CouplingMap, safety: f64) -> f64 {
    map.coupled_cells().min(params.cells()) as f64 * t_p_est * safety
}

/// Picks the earliest-crossing in-range neighbour of `reference`.
pub fn detect_winner(log: &CrossingLog, reference: Cell, tie_window: f64) -> Option<(Cell, f64, bool)> {
    let candidates: Vec<Cell> = reference.neighbors(log.rows(), log.cols()).collect();
    detect_winner_among(log, &candidates, tie_window)
}

/// Picks the earliest-crossing cell of `candidates`, which must be listed
/// in tie-break priority order. Returns the winner, its crossing time and
/// whether another candidate crossed within `tie_window` of it.
pub fn detect_winner_among(log: &CrossingLog, candidates: &[Cell], tie_window: f64) -> Option<(Cell, f64, bool)> {
    let crossed: Vec<(Cell, f64)> = candidates.iter().filter_map(|&c| log.time(c).map(|t| (c, t))).collect();
    let earliest = crossed.iter().map(|&(_, t)| t).reduce(f64::min)?;
    let close: Vec<&(Cell, f64)> = crossed.iter().filter(|(_, t)| *t - earliest <= tie_window).collect();
    let &(winner, time) = close[0];
    Some((winner, time, close.len() > 1))
}

/// Called with the iteration index and the state every frame interval.
pub type FrameObserver<'a> = dyn FnMut(usize, &GridState) -> Result<()> + 'a;

/// Runs the path solver on a fixed template image.
pub fn solve_template(problem: &PathProblem, img: &TemplateImage, mode: CouplingMode) -> Result<PathSolution> {
    let map = build_coupling(img, &problem.params, mode)?;
    solve_path(problem, &mut StaticMap(map))
}

pub fn solve_path(problem: &PathProblem, maps: &mut dyn MapProvider) -> Result<PathSolution> {
    solve_path_observed(problem, maps, None, &mut |_, _| Ok(()))
}

/// [`solve_path`] with state frames every `frame_every` ns of each episode.
pub fn solve_path_observed(
    problem: &PathProblem,
    maps: &mut dyn MapProvider,
    frame_every: Option<f64>,
    observer: &mut FrameObserver<'_>,
) -> Result<PathSolution> {
    let params = &problem.params;
    params.validate()?;
    params.check_cell(problem.start)?;
    params.check_cell(problem.target)?;
    let stable = stable_states(&problem.curve, params.bias)?;
    if !stable.excitable {
        return Err(Error::NotExcitable { bias: params.bias, peak: problem.curve.peak().1 });
    }
    if !(problem.threshold > stable.low && problem.threshold < stable.high) {
        return Err(Error::InvalidParameter(format!(
            "winner threshold {} V is not between the stable states ({stable})",
            problem.threshold
        )));
    }
    let t_p = match problem.timeout.t_p_est {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::InvalidParameter(format!("t_p estimate must be positive, got {t}"))),
        None => measure_tp(params, &problem.curve, problem.threshold)?.t_p,
    };
    let tie_window = problem.timeout.tie_fraction * t_p;
    let cap = problem.max_iterations.unwrap_or(params.cells());

    let mut solution = PathSolution {
        outcome: Outcome::BudgetExceeded,
        start: problem.start,
        target: problem.target,
        path: Vec::new(),
        iterations: Vec::new(),
        total_time: 0.0,
        t_p,
        final_stop: None,
    };
    let mut reference = problem.start;
    let mut target = problem.target;
    for iteration in 0.. {
        target = maps.target(iteration, target)?;
        params.check_cell(target)?;
        solution.target = target;
        if reference == target {
            solution.outcome = Outcome::Reached;
            break;
        }
        if iteration >= cap {
            solution.outcome = Outcome::BudgetExceeded;
            break;
        }

        let coupling = maps.coupling(iteration)?;
        let candidates: Vec<Cell> = coupling.connected_neighbors(reference).collect();
        let mut lattice = Lattice::new(params, &coupling, &problem.curve)?
            .with_active_set(&[stable.low, stable.high], ACTIVE_SET_EPSILON);
        let mut state = uniform_init(params, &stable);
        for stimulus in excite(&mut state, target, &stable, &problem.excitation)? {
            lattice.add_stimulus(stimulus);
        }
        let stop = StopRule {
            watch: Some(Watch { cells: candidates.clone(), mode: WatchMode::Any, linger: tie_window }),
            budget: Some(timeout_bound_with(params, t_p, &coupling, problem.timeout.safety)),
            quiescence: Some(problem.timeout.quiescence_factor * t_p),
        };
        let episode = run_wave_observed(&mut lattice, state, problem.threshold, &stop, frame_every, &mut |s| {
            observer(iteration, s)
        })?;

        match detect_winner_among(&episode.log, &candidates, tie_window) {
            Some((winner, crossing_time, tie)) => {
                solution.iterations.push(IterationResult {
                    reference,
                    target,
                    winner,
                    crossing_time,
                    duration: episode.duration,
                    tie,
                });
                solution.path.push(winner);
                solution.total_time += crossing_time;
                reference = winner;
            }
            None => {
                solution.outcome = Outcome::NoPath;
                solution.final_stop = Some(episode.reason);
                break;
            }
        }
    }
    Ok(solution)
}

/// Intensity of the trail in [`overlay`].
pub const TRAIL: u8 = 128;

/// Copy of `img` with the start and every path cell set to [`TRAIL`].
pub fn overlay(img: &TemplateImage, solution: &PathSolution) -> TemplateImage {
    let mut out = img.clone();
    for &cell in std::iter::once(&solution.start).chain(&solution.path) {
        if out.contains(cell) {
            out.set(cell, TRAIL);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstacles::{make_fixture, sealed_center, FixtureKind};

    fn corridor_problem(len: usize, start: usize, target: usize) -> (PathProblem, CouplingMap) {
        let params = GridParams::nominal(1, len);
        let map = CouplingMap::uniform(1, len, params.conductance);
        let mut p = PathProblem::new(params, ReactionCurve::calibrated(), Cell::new(0, start), Cell::new(0, target));
        p.timeout.t_p_est = Some(16.92);
        (p, map)
    }

    #[test]
    fn timeout_arithmetic() {
        let p = GridParams::nominal(80, 80);
        let map = CouplingMap::uniform(80, 80, 25.0);
        assert!((timeout_bound(&p, 16.92, &map) - 6400.0 * 16.92 * 1.5).abs() < 1e-6);
        assert!((timeout_bound(&p, 16.92, &map) - 162_432.0).abs() < 1e-6);
        let p = GridParams::nominal(1, 10);
        let map = CouplingMap::uniform(1, 10, 25.0);
        assert!((timeout_bound(&p, 16.92, &map) - 253.8).abs() < 1e-9);
    }

    #[test]
    fn winner_selection() {
        let mut log = CrossingLog::new(3, 3, 1.2);
        let rc = Cell::new(1, 1);
        assert_eq!(detect_winner(&log, rc, 0.17), None);
        log.record(Cell::new(1, 2), 50.0);
        assert_eq!(detect_winner(&log, rc, 0.17), Some((Cell::new(1, 2), 50.0, false)));
        // West is earlier by a hair, but East wins the tie on priority.
        log.record(Cell::new(1, 0), 49.999);
        assert_eq!(detect_winner(&log, rc, 0.17), Some((Cell::new(1, 2), 50.0, true)));
        // A clear leader beats priority.
        log.record(Cell::new(0, 1), 60.0);
        log.record(Cell::new(2, 1), 40.0);
        assert_eq!(detect_winner(&log, rc, 0.17), Some((Cell::new(2, 1), 40.0, false)));
    }

    #[test]
    fn tie_at_forty_ns() {
        let mut log = CrossingLog::new(3, 3, 1.2);
        log.record(Cell::new(2, 1), 40.0);
        log.record(Cell::new(0, 1), 40.001);
        let (winner, _, tie) = detect_winner(&log, Cell::new(1, 1), 0.17).unwrap();
        assert!(tie);
        assert_eq!(winner, Cell::new(0, 1));
    }

    #[test]
    fn already_at_target() {
        let (p, map) = corridor_problem(5, 2, 2);
        let s = solve_path(&p, &mut StaticMap(map)).unwrap();
        assert_eq!(s.outcome, Outcome::Reached);
        assert_eq!(s.steps(), 0);
        assert_eq!(s.total_time, 0.0);
    }

    #[test]
    fn short_corridor() {
        let (p, map) = corridor_problem(10, 0, 9);
        let s = solve_path(&p, &mut StaticMap(map)).unwrap();
        assert_eq!(s.outcome, Outcome::Reached);
        let expected: Vec<Cell> = (1..10).map(|c| Cell::new(0, c)).collect();
        assert_eq!(s.path, expected);
        for it in &s.iterations {
            assert!(it.crossing_time <= it.duration);
        }
    }

    #[test]
    fn sealed_target_has_no_path() {
        let img = make_fixture(FixtureKind::Sealed, 9, 9, 0).unwrap();
        let params = GridParams::nominal(9, 9);
        let mut p = PathProblem::new(params, ReactionCurve::calibrated(), Cell::new(0, 0), sealed_center(9, 9));
        p.timeout.t_p_est = Some(16.92);
        let s = solve_template(&p, &img, CouplingMode::default()).unwrap();
        assert_eq!(s.outcome, Outcome::NoPath);
        assert!(s.iterations.is_empty());
        assert_eq!(s.final_stop, Some(StopReason::Quiescence));
    }

    #[test]
    fn iteration_cap() {
        let (mut p, map) = corridor_problem(10, 0, 9);
        p.max_iterations = Some(3);
        let s = solve_path(&p, &mut StaticMap(map)).unwrap();
        assert_eq!(s.outcome, Outcome::BudgetExceeded);
        assert_eq!(s.steps(), 3);
    }

    struct Retarget;

    impl MapProvider for Retarget {
        fn coupling(&mut self, _: usize) -> Result<CouplingMap> {
            Ok(CouplingMap::uniform(1, 10, 25.0))
        }

        fn target(&mut self, iteration: usize, current: Cell) -> Result<Cell> {
            // the target walks back towards the robot after two iterations
            Ok(if iteration == 2 { Cell::new(0, 4) } else { current })
        }
    }

    #[test]
    fn target_updates_between_iterations() {
        let (p, _) = corridor_problem(10, 0, 9);
        let s = solve_path(&p, &mut Retarget).unwrap();
        assert_eq!(s.outcome, Outcome::Reached);
        assert_eq!(s.target, Cell::new(0, 4));
        assert_eq!(s.path.last(), Some(&Cell::new(0, 4)));
        assert_eq!(s.steps(), 4);
    }

    #[test]
    fn non_excitable_bias_is_rejected() {
        let (mut p, map) = corridor_problem(5, 0, 4);
        p.params.bias = 40.0;
        assert!(matches!(solve_path(&p, &mut StaticMap(map)), Err(Error::NotExcitable { .. })));
    }

    #[test]
    fn overlay_marks_trail() {
        let img = TemplateImage::filled(1, 4, 255);
        let sol = PathSolution {
            outcome: Outcome::Reached,
            start: Cell::new(0, 0),
            target: Cell::new(0, 2),
            path: vec![Cell::new(0, 1), Cell::new(0, 2)],
            iterations: vec![],
            total_time: 0.0,
            t_p: 16.92,
            final_stop: None,
        };
        assert_eq!(overlay(&img, &sol).pixels(), &[TRAIL, TRAIL, TRAIL, 255]);
    }
}

//! Path planning with trigger autowaves on an excitable cell lattice.
//!
//! Every cell of a two-dimensional array is a bistable nonlinear resistor
//! in parallel with a capacitor, coupled to its four neighbours through
//! conductances. A cell switched to the high state pulls its neighbours
//! over the threshold, so a front spreads from an excited cell along the
//! coupled region. Obstacles are encoded by cutting the couplings. The
//! path solver repeatedly launches a front from the target and steps the
//! robot onto the neighbour reached first.

pub mod analytics;
pub mod error;
pub mod lattice;
pub mod obstacles;
pub mod pathsolver;
pub mod pgm;
pub mod physics;
pub mod wavesim;

pub use analytics::{bfs_shortest, compare_path, predict_solution_time, worst_case_time, ObstacleGraph};
pub use error::{Error, Result};
pub use lattice::{Cell, CouplingMap, Direction, Excitation, GridParams, GridState, Lattice};
pub use obstacles::{build_coupling, make_fixture, CouplingMode, FixtureKind, TemplateImage};
pub use pathsolver::{solve_path, solve_template, Outcome, PathProblem, PathSolution};
pub use physics::{calibrate_slope, stable_states, Anchors, ReactionCurve, StableStates};
pub use wavesim::{measure_tp, run_wave, CrossingLog, SpeedMeasurement, StopRule};

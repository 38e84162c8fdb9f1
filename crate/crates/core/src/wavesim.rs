//! Wave episodes, threshold-crossing logs and front-speed measurement.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{excite, uniform_init, Cell, CouplingMap, Excitation, GridParams, GridState, Lattice};
use crate::physics::{stable_states, ReactionCurve};

/// Winner threshold voltage used throughout (V).
pub const DEFAULT_THRESHOLD: f64 = 1.2;

/// First time (ns, relative to the episode start) each cell reached the
/// threshold voltage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingLog {
    rows: usize,
    cols: usize,
    pub threshold: f64,
    times: Vec<Option<f64>>,
}

impl CrossingLog {
    pub fn new(rows: usize, cols: usize, threshold: f64) -> Self {
        Self { rows, cols, threshold, times: vec![None; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn time(&self, cell: Cell) -> Option<f64> {
        self.times[cell.row * self.cols + cell.col]
    }

    pub fn record(&mut self, cell: Cell, time: f64) {
        let slot = &mut self.times[cell.row * self.cols + cell.col];
        if slot.is_none() {
            *slot = Some(time);
        }
    }

    pub fn times(&self) -> &[Option<f64>] {
        &self.times
    }

    pub fn crossed(&self) -> usize {
        self.times.iter().filter(|t| t.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.crossed() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatchMode {
    Any,
    All,
}

/// Stop once watched cells have crossed, optionally running on for
/// `linger` ns so that near-simultaneous crossings are also recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Watch {
    pub cells: Vec<Cell>,
    pub mode: WatchMode,
    pub linger: f64,
}

/// Episode termination. The first condition met ends the run; at least one
/// must be set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StopRule {
    pub watch: Option<Watch>,
    /// Maximum simulated duration (ns).
    pub budget: Option<f64>,
    /// Stop when no new crossing has happened for this long (ns).
    pub quiescence: Option<f64>,
}

impl StopRule {
    pub fn budget(ns: f64) -> Self {
        Self { budget: Some(ns), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Watched,
    Budget,
    Quiescence,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub state: GridState,
    pub log: CrossingLog,
    pub reason: StopReason,
    /// Simulated duration (ns).
    pub duration: f64,
}

/// Integrates `state` until `stop` fires, logging linearly interpolated
/// first crossings of `threshold`. Cells already at or above the threshold
/// at the start are logged at time zero.
pub fn run_wave(lattice: &mut Lattice<'_>, state: GridState, threshold: f64, stop: &StopRule) -> Result<Episode> {
    run_wave_observed(lattice, state, threshold, stop, None, &mut |_| Ok(()))
}

/// [`run_wave`] that also hands the state to `observer` at the start and
/// then every `frame_every` ns.
pub fn run_wave_observed(
    lattice: &mut Lattice<'_>,
    mut state: GridState,
    threshold: f64,
    stop: &StopRule,
    frame_every: Option<f64>,
    observer: &mut dyn FnMut(&GridState) -> Result<()>,
) -> Result<Episode> {
    if stop.watch.is_none() && stop.budget.is_none() && stop.quiescence.is_none() {
        return Err(Error::InvalidParameter("stop rule has no condition".into()));
    }
    let (rows, cols) = (state.rows(), state.cols());
    let dt = lattice.params().dt;
    let t0 = state.time;
    let mut log = CrossingLog::new(rows, cols, threshold);
    let mut last_crossing = 0.0f64;
    for (i, &v) in state.voltages().iter().enumerate() {
        if v >= threshold {
            log.times[i] = Some(0.0);
        }
    }
    let watched: Vec<usize> =
        stop.watch.as_ref().map(|w| w.cells.iter().map(|c| c.row * cols + c.col).collect()).unwrap_or_default();

    let mut next_frame = frame_every.map(|_| 0.0);
    let mut prev = state.voltages().to_vec();
    let eps = 1e-3 * dt;

    let reason = loop {
        let elapsed = state.time - t0;
        if let Some(f) = next_frame {
            if elapsed + eps >= f {
                observer(&state)?;
                next_frame = frame_every.map(|k| f + k);
            }
        }
        if let Some(w) = &stop.watch {
            let mut times = watched.iter().map(|&i| log.times[i]);
            let reached = match w.mode {
                WatchMode::Any => times.flatten().fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t)))),
                WatchMode::All => times.try_fold(0.0f64, |m, t| t.map(|t| m.max(t))),
            };
            if reached.is_some_and(|t| elapsed + eps >= t + w.linger) {
                break StopReason::Watched;
            }
        }
        if stop.budget.is_some_and(|b| elapsed + eps >= b) {
            break StopReason::Budget;
        }
        if stop.quiescence.is_some_and(|q| elapsed - last_crossing + eps >= q) {
            break StopReason::Quiescence;
        }

        prev.copy_from_slice(state.voltages());
        let before = state.time - t0;
        lattice.step(&mut state)?;
        for (i, (&old, &new)) in prev.iter().zip(state.voltages()).enumerate() {
            if log.times[i].is_none() && old < threshold && new >= threshold {
                let t = before + dt * (threshold - old) / (new - old);
                log.times[i] = Some(t);
                last_crossing = last_crossing.max(t);
            }
        }
    };

    Ok(Episode { duration: state.time - t0, state, log, reason })
}

/// Transition interval and front speed at one bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedMeasurement {
    /// uA
    pub bias: f64,
    /// ns per cell
    pub t_p: f64,
    /// cells per microsecond
    pub c_p: f64,
}

impl SpeedMeasurement {
    pub fn from_interval(bias: f64, t_p: f64) -> Self {
        Self { bias, t_p, c_p: 1000.0 / t_p }
    }
}

/// Corridor layout for [`measure_tp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorOptions {
    pub length: usize,
    /// Number of consecutive central cells whose crossings are averaged.
    pub window: usize,
    /// Give up if no cell crosses for this long (ns).
    pub stall: f64,
}

impl Default for CorridorOptions {
    fn default() -> Self {
        Self { length: 60, window: 20, stall: 1000.0 }
    }
}

/// Transition interval on a 1x60 corridor excited at one end, averaged over
/// the central 20 cells.
pub fn measure_tp(params: &GridParams, curve: &ReactionCurve, threshold: f64) -> Result<SpeedMeasurement> {
    measure_tp_with(params, curve, threshold, &CorridorOptions::default())
}

pub fn measure_tp_with(
    params: &GridParams,
    curve: &ReactionCurve,
    threshold: f64,
    opts: &CorridorOptions,
) -> Result<SpeedMeasurement> {
    if opts.window < 2 || opts.window > opts.length {
        return Err(Error::InvalidParameter(format!(
            "corridor window {} does not fit length {}",
            opts.window, opts.length
        )));
    }
    let stable = stable_states(curve, params.bias)?;
    if !stable.excitable {
        return Err(Error::Measurement(format!(
            "no front at I_B = {} uA: the cell is not excitable ({stable})",
            params.bias
        )));
    }
    let corridor = params.with_size(1, opts.length);
    let coupling = CouplingMap::uniform(1, opts.length, corridor.conductance);
    let mut lattice = Lattice::new(&corridor, &coupling, curve)?;
    let mut state = uniform_init(&corridor, &stable);
    excite(&mut state, Cell::new(0, 0), &stable, &Excitation::STATE_ONLY)?;

    let first = (opts.length - opts.window) / 2;
    let last = first + opts.window - 1;
    let stop = StopRule {
        watch: Some(Watch { cells: vec![Cell::new(0, last)], mode: WatchMode::Any, linger: 0.0 }),
        budget: Some(opts.stall * opts.length as f64),
        quiescence: Some(opts.stall),
    };
    let episode = run_wave(&mut lattice, state, threshold, &stop)?;
    match (episode.log.time(Cell::new(0, first)), episode.log.time(Cell::new(0, last))) {
        (Some(a), Some(b)) if b > a => {
            Ok(SpeedMeasurement::from_interval(params.bias, (b - a) / (opts.window - 1) as f64))
        }
        _ => Err(Error::Measurement(format!(
            "front did not traverse the corridor at I_B = {} uA ({} of {} cells crossed)",
            params.bias,
            episode.log.crossed(),
            opts.length
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SweepPoint {
    Measured(SpeedMeasurement),
    NonExcitable { bias: f64, margin: f64 },
    Failed { bias: f64, reason: String },
}

impl SweepPoint {
    pub fn bias(&self) -> f64 {
        match self {
            SweepPoint::Measured(m) => m.bias,
            SweepPoint::NonExcitable { bias, .. } | SweepPoint::Failed { bias, .. } => *bias,
        }
    }

    pub fn measurement(&self) -> Option<&SpeedMeasurement> {
        match self {
            SweepPoint::Measured(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// True when t_p strictly decreases with increasing bias over every
    /// measured point.
    pub monotone: bool,
}

/// Measures t_p at each bias in parallel. Results keep the input order.
pub fn sweep_bias(biases: &[f64], params: &GridParams, curve: &ReactionCurve, threshold: f64) -> SweepReport {
    let points: Vec<SweepPoint> = biases
        .par_iter()
        .map(|&bias| {
            match stable_states(curve, bias) {
                Ok(s) if !s.excitable => return SweepPoint::NonExcitable { bias, margin: s.margin },
                Err(e) => return SweepPoint::Failed { bias, reason: e.to_string() },
                Ok(_) => {}
            }
            match measure_tp(&params.with_bias(bias), curve, threshold) {
                Ok(m) => SweepPoint::Measured(m),
                Err(e) => SweepPoint::Failed { bias, reason: e.to_string() },
            }
        })
        .collect();

    let mut measured: Vec<&SpeedMeasurement> = points.iter().filter_map(SweepPoint::measurement).collect();
    measured.sort_by(|a, b| a.bias.total_cmp(&b.bias));
    let monotone = measured.windows(2).all(|w| w[1].bias > w[0].bias && w[1].t_p < w[0].t_p);
    SweepReport { points, monotone }
}

impl SweepReport {
    /// Writes `I_B,t_p,c_p,status`; failed rows leave the numbers empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["I_B", "t_p", "c_p", "status"])?;
        for p in &self.points {
            let row = match p {
                SweepPoint::Measured(m) => [m.bias.to_string(), m.t_p.to_string(), m.c_p.to_string(), "ok".into()],
                SweepPoint::NonExcitable { bias, .. } => {
                    [bias.to_string(), String::new(), String::new(), "non-excitable".into()]
                }
                SweepPoint::Failed { bias, reason } => {
                    [bias.to_string(), String::new(), String::new(), format!("failed: {reason}")]
                }
            };
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_units() {
        let m = SpeedMeasurement::from_interval(18.0, 36.06);
        assert!((m.c_p - 27.73).abs() < 0.005);
        assert!((m.c_p * m.t_p - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn stop_rule_must_have_a_condition() {
        let p = GridParams::nominal(1, 3);
        let g = CouplingMap::uniform(1, 3, 25.0);
        let curve = ReactionCurve::calibrated();
        let mut lat = Lattice::new(&p, &g, &curve).unwrap();
        let state = GridState::filled(1, 3, 0.97);
        assert!(run_wave(&mut lat, state, 1.2, &StopRule::default()).is_err());
    }

    #[test]
    fn quiet_network_logs_nothing() {
        let p = GridParams::nominal(4, 4);
        let g = CouplingMap::uniform(4, 4, 25.0);
        let curve = ReactionCurve::calibrated();
        let s = stable_states(&curve, 21.0).unwrap();
        let mut lat = Lattice::new(&p, &g, &curve).unwrap();
        let ep = run_wave(&mut lat, uniform_init(&p, &s), 1.2, &StopRule::budget(1000.0)).unwrap();
        assert!(ep.log.is_empty());
        assert_eq!(ep.reason, StopReason::Budget);
        assert!((ep.duration - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn csv_layout() {
        let report = SweepReport {
            points: vec![
                SweepPoint::Measured(SpeedMeasurement::from_interval(21.0, 20.0)),
                SweepPoint::NonExcitable { bias: 30.0, margin: -5.0 },
            ],
            monotone: true,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "I_B,t_p,c_p,status\n21,20,50,ok\n30,,,non-excitable\n");
    }
}

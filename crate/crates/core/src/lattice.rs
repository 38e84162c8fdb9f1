//! The coupled cell array and its time integration.
//!
//! Each cell obeys
//!
//! ```text
//! C_I dv/dt = sum_{nb} G_edge (v_nb - v) + I_B - J(v) (+ I_stim)
//! ```
//!
//! over its existing 4-neighbours. Border cells simply have fewer edges
//! (zero-flux boundary). Voltages are in volts, conductances in uS,
//! capacitance in fF and currents in uA, so time is in nanoseconds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obstacles::TemplateImage;
use crate::physics::{ReactionCurve, StableStates};

/// Real-axis stability limit of classical RK4, `|lambda dt| <= 2.785`.
pub const RK4_STABILITY_LIMIT: f64 = 2.785;

/// Default tolerance for the quiescent-cell skip.
pub const ACTIVE_SET_EPSILON: f64 = 1e-9;

/// Voltage mapped to full white in snapshots.
pub const SNAPSHOT_FULL_SCALE: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// The neighbour in `dir`, if it lies inside a `rows x cols` grid.
    pub fn step(self, dir: Direction, rows: usize, cols: usize) -> Option<Cell> {
        let Cell { row, col } = self;
        match dir {
            Direction::North => row.checked_sub(1).map(|r| Cell::new(r, col)),
            Direction::East => (col + 1 < cols).then(|| Cell::new(row, col + 1)),
            Direction::South => (row + 1 < rows).then(|| Cell::new(row + 1, col)),
            Direction::West => col.checked_sub(1).map(|c| Cell::new(row, c)),
        }
    }

    /// In-range 4-neighbours in North, East, South, West order.
    pub fn neighbors(self, rows: usize, cols: usize) -> impl Iterator<Item = Cell> {
        Direction::ALL.into_iter().filter_map(move |d| self.step(d, rows, cols))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    /// Fixed scan order; also the tie-break order for winner detection.
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];
}

/// Physical constants of the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    /// Nominal coupling conductance G (uS).
    pub conductance: f64,
    /// Cell capacitance C_I (fF).
    pub capacitance: f64,
    /// Common bias current I_B (uA).
    pub bias: f64,
    /// Integration step (ns).
    pub dt: f64,
}

impl GridParams {
    /// G = 25 uS, C_I = 500 fF, I_B = 21 uA, dt = 0.05 ns.
    pub fn nominal(rows: usize, cols: usize) -> Self {
        Self { rows, cols, conductance: 25.0, capacitance: 500.0, bias: 21.0, dt: 0.05 }
    }

    pub fn with_bias(self, bias: f64) -> Self {
        Self { bias, ..self }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn with_size(self, rows: usize, cols: usize) -> Self {
        Self { rows, cols, ..self }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn check_cell(&self, cell: Cell) -> Result<()> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(Error::OutOfRange { cell, rows: self.rows, cols: self.cols })
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
            }
        };
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter(format!("grid must be at least 1x1, got {}x{}", self.rows, self.cols)));
        }
        positive("conductance", self.conductance)?;
        positive("capacitance", self.capacitance)?;
        positive("bias", self.bias)?;
        positive("dt", self.dt)
    }
}

/// Per-edge coupling conductances (uS). One value per undirected edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMap {
    rows: usize,
    cols: usize,
    /// Edge (i, j)-(i, j+1), row-major `rows x (cols - 1)`.
    horizontal: Vec<f64>,
    /// Edge (i, j)-(i+1, j), row-major `(rows - 1) x cols`.
    vertical: Vec<f64>,
}

impl CouplingMap {
    pub fn uniform(rows: usize, cols: usize, conductance: f64) -> Self {
        Self {
            rows,
            cols,
            horizontal: vec![conductance; rows * cols.saturating_sub(1)],
            vertical: vec![conductance; rows.saturating_sub(1) * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, horizontal: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        if horizontal.len() != rows * cols.saturating_sub(1) || vertical.len() != rows.saturating_sub(1) * cols {
            return Err(Error::Dimension(format!(
                "coupling arrays of length {}/{} do not fit a {rows}x{cols} grid",
                horizontal.len(),
                vertical.len()
            )));
        }
        if let Some(g) = horizontal.iter().chain(&vertical).find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidParameter(format!("conductances must be finite and non-negative, got {g}")));
        }
        Ok(Self { rows, cols, horizontal, vertical })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn vertical(&self) -> &[f64] {
        &self.vertical
    }

    fn edge_slot(&mut self, a: Cell, b: Cell) -> Option<&mut f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if b.row >= self.rows || b.col >= self.cols {
            return None;
        }
        if a.row == b.row && a.col + 1 == b.col {
            self.horizontal.get_mut(a.row * (self.cols - 1) + a.col)
        } else if a.col == b.col && a.row + 1 == b.row {
            self.vertical.get_mut(a.row * self.cols + a.col)
        } else {
            None
        }
    }

    /// Conductance of the edge between two adjacent cells, in either order.
    pub fn edge(&self, a: Cell, b: Cell) -> Option<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if b.row >= self.rows || b.col >= self.cols {
            return None;
        }
        if a.row == b.row && a.col + 1 == b.col {
            Some(self.horizontal[a.row * (self.cols - 1) + a.col])
        } else if a.col == b.col && a.row + 1 == b.row {
            Some(self.vertical[a.row * self.cols + a.col])
        } else {
            None
        }
    }

    pub fn set_edge(&mut self, a: Cell, b: Cell, conductance: f64) -> Result<()> {
        if !(conductance.is_finite() && conductance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "conductances must be finite and non-negative, got {conductance}"
            )));
        }
        let (rows, cols) = (self.rows, self.cols);
        match self.edge_slot(a, b) {
            Some(slot) => {
                *slot = conductance;
                Ok(())
            }
            None => Err(Error::Dimension(format!("{a} and {b} are not adjacent cells of a {rows}x{cols} grid"))),
        }
    }

    /// Cuts every edge incident to `cell`.
    pub fn isolate(&mut self, cell: Cell) {
        for nb in cell.neighbors(self.rows, self.cols).collect::<Vec<_>>() {
            if let Some(slot) = self.edge_slot(cell, nb) {
                *slot = 0.0;
            }
        }
    }

    /// Neighbours reachable from `cell` through a nonzero edge, NESW order.
    pub fn connected_neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        cell.neighbors(self.rows, self.cols).filter(move |&nb| self.edge(cell, nb).is_some_and(|g| g > 0.0))
    }

    /// Number of cells with at least one nonzero edge.
    pub fn coupled_cells(&self) -> usize {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| Cell::new(r, c)))
            .filter(|&c| self.connected_neighbors(c).next().is_some())
            .count()
    }

    fn max_total_conductance(&self) -> f64 {
        let mut max = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = Cell::new(r, c);
                let total: f64 = cell.neighbors(self.rows, self.cols).filter_map(|nb| self.edge(cell, nb)).sum();
                max = max.max(total);
            }
        }
        max
    }
}

/// Voltage field plus simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    rows: usize,
    cols: usize,
    voltages: Vec<f64>,
    /// Simulated time (ns).
    pub time: f64,
}

impl GridState {
    pub fn filled(rows: usize, cols: usize, voltage: f64) -> Self {
        Self { rows, cols, voltages: vec![voltage; rows * cols], time: 0.0 }
    }

    pub fn from_voltages(rows: usize, cols: usize, voltages: Vec<f64>) -> Result<Self> {
        if voltages.len() != rows * cols {
            return Err(Error::Dimension(format!("{} voltages for a {rows}x{cols} grid", voltages.len())));
        }
        Ok(Self { rows, cols, voltages, time: 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn voltages_mut(&mut self) -> &mut [f64] {
        &mut self.voltages
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.voltages[cell.row * self.cols + cell.col]
    }

    pub fn set(&mut self, cell: Cell, voltage: f64) {
        self.voltages[cell.row * self.cols + cell.col] = voltage;
    }

    pub fn max_abs_diff(&self, other: &GridState) -> f64 {
        self.voltages.iter().zip(&other.voltages).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Grayscale snapshot, 0..1.8 V mapped linearly onto 0..255.
    pub fn snapshot(&self) -> TemplateImage {
        let pixels =
            self.voltages.iter().map(|&v| ((v / SNAPSHOT_FULL_SCALE).clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        TemplateImage::new(self.rows, self.cols, pixels).expect("snapshot dimensions match")
    }
}

/// All cells at the low stable state, clock at zero.
pub fn uniform_init(params: &GridParams, stable: &StableStates) -> GridState {
    GridState::filled(params.rows, params.cols, stable.low)
}

/// What a [`Stimulus`] does to its cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// Extra constant current (uA).
    Current(f64),
    /// Freeze the cell at its present voltage.
    Hold,
}

/// An external drive on one cell over `[start, end)` ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub cell: Cell,
    pub drive: Drive,
    pub start: f64,
    pub end: f64,
}

impl Stimulus {
    fn active_at(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentPulse {
    /// uA
    pub amplitude: f64,
    /// ns
    pub duration: f64,
}

/// How a source cell is kicked off.
///
/// `set_high` programs the cell to `V_H`; `hold` keeps it there for a
/// while and `pulse` drives it with a constant current. A single programmed
/// cell launches a front from a corridor end or a grid corner, but an
/// interior cell drained by four resting neighbours falls back to `V_L`
/// unless it is held for roughly 20 ns. Released any earlier than about
/// 100 ns, the source is dragged below `V_H` by its still-rising neighbours
/// before it recovers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub set_high: bool,
    /// ns
    pub hold: Option<f64>,
    pub pulse: Option<CurrentPulse>,
}

impl Excitation {
    pub const STATE_ONLY: Excitation = Excitation { set_high: true, hold: None, pulse: None };

    pub fn current(amplitude: f64, duration: f64) -> Self {
        Self { set_high: false, hold: None, pulse: Some(CurrentPulse { amplitude, duration }) }
    }

    pub fn held(duration: f64) -> Self {
        Self { hold: Some(duration), ..Self::STATE_ONLY }
    }

    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::InvalidParameter(format!("excitation {what} must be positive, got {v}")));
        if let Some(h) = self.hold {
            if !(h.is_finite() && h > 0.0) {
                return bad("hold", h);
            }
        }
        if let Some(p) = self.pulse {
            if !(p.duration.is_finite() && p.duration > 0.0) {
                return bad("pulse duration", p.duration);
            }
            if !p.amplitude.is_finite() {
                return bad("pulse amplitude", p.amplitude);
            }
        }
        if !self.set_high && self.pulse.is_none() {
            return Err(Error::InvalidParameter("excitation neither programs the cell nor drives it".into()));
        }
        Ok(())
    }
}

impl Default for Excitation {
    /// Program to `V_H` and hold for 200 ns.
    fn default() -> Self {
        Self::held(DEFAULT_HOLD)
    }
}

/// Applies `excitation` to `cell`. Returns the stimuli to register with the
/// integrator.
pub fn excite(
    state: &mut GridState,
    cell: Cell,
    stable: &StableStates,
    excitation: &Excitation,
) -> Result<Vec<Stimulus>> {
    if cell.row >= state.rows || cell.col >= state.cols {
        return Err(Error::OutOfRange { cell, rows: state.rows, cols: state.cols });
    }
    excitation.validate()?;
    if excitation.set_high {
        state.set(cell, stable.high);
    }
    let t = state.time;
    let hold = excitation.hold.map(|d| Stimulus { cell, drive: Drive::Hold, start: t, end: t + d });
    let pulse =
        excitation.pulse.map(|p| Stimulus { cell, drive: Drive::Current(p.amplitude), start: t, end: t + p.duration });
    Ok(hold.into_iter().chain(pulse).collect())
}

/// Default source hold (ns).
pub const DEFAULT_HOLD: f64 = 200.0;

/// Reusable integrator bound to one parameter set, coupling map and curve.
pub struct Lattice<'a> {
    params: &'a GridParams,
    coupling: &'a CouplingMap,
    curve: &'a ReactionCurve,
    stimuli: Vec<Stimulus>,
    quiescent: Option<(Vec<f64>, f64)>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    active: Vec<bool>,
    spread: Vec<bool>,
    near_rest: Vec<u8>,
}

impl<'a> Lattice<'a> {
    pub fn new(params: &'a GridParams, coupling: &'a CouplingMap, curve: &'a ReactionCurve) -> Result<Self> {
        params.validate()?;
        if coupling.rows != params.rows || coupling.cols != params.cols {
            return Err(Error::Dimension(format!(
                "coupling map is {}x{}, grid is {}x{}",
                coupling.rows, coupling.cols, params.rows, params.cols
            )));
        }
        let limit = stability_limit(params, coupling, curve);
        if params.dt > limit {
            return Err(Error::InvalidParameter(format!(
                "dt = {} ns exceeds the RK4 stability bound {limit:.3} ns",
                params.dt
            )));
        }
        let n = params.cells();
        Ok(Self {
            params,
            coupling,
            curve,
            stimuli: Vec::new(),
            quiescent: None,
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            active: vec![true; n],
            spread: vec![true; n],
            near_rest: vec![0; n],
        })
    }

    pub fn params(&self) -> &GridParams {
        self.params
    }

    pub fn coupling(&self) -> &CouplingMap {
        self.coupling
    }

    pub fn curve(&self) -> &ReactionCurve {
        self.curve
    }

    pub fn add_stimulus(&mut self, stimulus: Stimulus) {
        self.stimuli.push(stimulus);
    }

    pub fn clear_stimuli(&mut self) {
        self.stimuli.clear();
    }

    /// Skip cells that, together with every neighbour they are coupled to,
    /// sit within `epsilon` of the same level in `rest` (normally the stable
    /// states). Skipped cells are frozen for that step.
    pub fn with_active_set(mut self, rest: &[f64], epsilon: f64) -> Self {
        self.quiescent = Some((rest.iter().copied().take(u8::MAX as usize).collect(), epsilon));
        self
    }

    /// Writes `dv/dt` (V/ns) for the field `v` at time `t` into `out`.
    pub fn rhs(&self, v: &[f64], t: f64, out: &mut [f64]) {
        rhs_into(self.params, self.coupling, self.curve, &self.stimuli, None, v, t, out);
    }

    /// Advances `state` by one RK4 step of `dt`.
    pub fn step(&mut self, state: &mut GridState) -> Result<()> {
        let dt = self.params.dt;
        let t = state.time;
        let n = self.params.cells();
        if state.voltages.len() != n {
            return Err(Error::Dimension(format!(
                "state is {}x{}, grid is {}x{}",
                state.rows, state.cols, self.params.rows, self.params.cols
            )));
        }

        if let Some(i) = state.voltages.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { cell: Cell::new(i / self.params.cols, i % self.params.cols), time: t });
        }

        let mask = if let Some((rest, eps)) = self.quiescent.take() {
            self.update_active_mask(&state.voltages, &rest, eps, t);
            self.quiescent = Some((rest, eps));
            Some(self.active.as_slice())
        } else {
            None
        };

        let [k1, k2, k3, k4] = &mut self.k;
        let v = &state.voltages;
        let stage = &mut self.stage;
        let (p, g, c, s) = (self.params, self.coupling, self.curve, &self.stimuli);
        // Stimuli are sampled at the start of the step for all four stages.
        rhs_into(p, g, c, s, mask, v, t, k1);
        for i in 0..n {
            stage[i] = v[i] + 0.5 * dt * k1[i];
        }
        rhs_into(p, g, c, s, mask, stage, t, k2);
        for i in 0..n {
            stage[i] = v[i] + 0.5 * dt * k2[i];
        }
        rhs_into(p, g, c, s, mask, stage, t, k3);
        for i in 0..n {
            stage[i] = v[i] + dt * k3[i];
        }
        rhs_into(p, g, c, s, mask, stage, t, k4);

        let sixth = dt / 6.0;
        for (i, vi) in state.voltages.iter_mut().enumerate() {
            *vi += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        state.time = t + dt;

        if let Some(i) = state.voltages.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                cell: Cell::new(i / self.params.cols, i % self.params.cols),
                time: state.time,
            });
        }
        Ok(())
    }

    fn update_active_mask(&mut self, v: &[f64], rest: &[f64], eps: f64, t: f64) {
        let (rows, cols) = (self.params.rows, self.params.cols);
        for (near, &vi) in self.near_rest.iter_mut().zip(v) {
            *near = rest.iter().position(|&r| (vi - r).abs() <= eps).map_or(0, |k| k as u8 + 1);
        }
        let h = &self.coupling.horizontal;
        let vert = &self.coupling.vertical;
        let near = &self.near_rest;
        // A neighbour behind a zero-conductance edge exchanges no current.
        let same = |i: usize, j: usize, g: f64| g == 0.0 || near[j] == near[i];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let quiet = near[i] != 0
                    && (r == 0 || same(i, i - cols, vert[i - cols]))
                    && (r + 1 == rows || same(i, i + cols, vert[i]))
                    && (c == 0 || same(i, i - 1, h[i - r - 1]))
                    && (c + 1 == cols || same(i, i + 1, h[i - r]));
                self.active[i] = !quiet;
            }
        }
        for s in &self.stimuli {
            if s.active_at(t) {
                self.active[s.cell.row * cols + s.cell.col] = true;
            }
        }
        // Each RK4 stage reaches one cell further, so a disturbance moves
        // cells up to four edges away within a single step.
        for _ in 0..3 {
            self.spread.copy_from_slice(&self.active);
            let a = &self.active;
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    if a[i] {
                        continue;
                    }
                    self.spread[i] = (r > 0 && vert[i - cols] != 0.0 && a[i - cols])
                        || (r + 1 < rows && vert[i] != 0.0 && a[i + cols])
                        || (c > 0 && h[i - r - 1] != 0.0 && a[i - 1])
                        || (c + 1 < cols && h[i - r] != 0.0 && a[i + 1]);
                }
            }
            std::mem::swap(&mut self.active, &mut self.spread);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rhs_into(
    params: &GridParams,
    coupling: &CouplingMap,
    curve: &ReactionCurve,
    stimuli: &[Stimulus],
    mask: Option<&[bool]>,
    v: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let (rows, cols) = (params.rows, params.cols);
    let h = &coupling.horizontal;
    let vert = &coupling.vertical;
    let inv_c = 1.0 / params.capacitance;
    let bias = params.bias;
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if mask.is_some_and(|m| !m[i]) {
                out[i] = 0.0;
                continue;
            }
            let vi = v[i];
            let north = if r > 0 { vert[i - cols] * (v[i - cols] - vi) } else { 0.0 };
            let south = if r + 1 < rows { vert[i] * (v[i + cols] - vi) } else { 0.0 };
            let west = if c > 0 { h[i - r - 1] * (v[i - 1] - vi) } else { 0.0 };
            let east = if c + 1 < cols { h[i - r] * (v[i + 1] - vi) } else { 0.0 };
            // Paired sums keep mirror-image grids bit-identical.
            let flux = (north + south) + (east + west);
            out[i] = (flux + bias - curve.current(vi)) * inv_c;
        }
    }
    for s in stimuli.iter().filter(|s| s.active_at(t)) {
        let i = s.cell.row * cols + s.cell.col;
        if let (Drive::Current(amp), true) = (s.drive, mask.is_none_or(|m| m[i])) {
            out[i] += amp * inv_c;
        }
    }
    for s in stimuli.iter().filter(|s| s.active_at(t)) {
        if s.drive == Drive::Hold {
            out[s.cell.row * cols + s.cell.col] = 0.0;
        }
    }
}

/// Largest stable RK4 step (ns) from a bound on the linearised decay rate.
pub fn stability_limit(params: &GridParams, coupling: &CouplingMap, curve: &ReactionCurve) -> f64 {
    let (v_peak, _) = curve.peak();
    let (v_valley, _) = curve.valley();
    let span = v_valley - v_peak;
    let (lo, hi) = (v_peak - 1.5 * span, v_valley + 1.5 * span);
    let max_slope = (0..=200).map(|k| curve.derivative(lo + (hi - lo) * k as f64 / 200.0).abs()).fold(0.0, f64::max);
    let rate = (2.0 * coupling.max_total_conductance() + max_slope) / params.capacitance;
    if rate > 0.0 {
        RK4_STABILITY_LIMIT / rate
    } else {
        f64::INFINITY
    }
}

/// Right-hand side of the cell equation for every cell, without stimuli.
pub fn rhs(state: &GridState, coupling: &CouplingMap, params: &GridParams, curve: &ReactionCurve) -> Result<Vec<f64>> {
    let lattice = Lattice::new(params, coupling, curve)?;
    if state.rows != params.rows || state.cols != params.cols {
        return Err(Error::Dimension(format!(
            "state is {}x{}, grid is {}x{}",
            state.rows, state.cols, params.rows, params.cols
        )));
    }
    let mut out = vec![0.0; params.cells()];
    lattice.rhs(&state.voltages, state.time, &mut out);
    Ok(out)
}

/// One RK4 step of `state`, returning the advanced copy.
pub fn step(
    state: &GridState,
    coupling: &CouplingMap,
    params: &GridParams,
    curve: &ReactionCurve,
) -> Result<GridState> {
    let mut lattice = Lattice::new(params, coupling, curve)?;
    let mut next = state.clone();
    lattice.step(&mut next)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::stable_states;

    fn setup(rows: usize, cols: usize) -> (GridParams, CouplingMap, ReactionCurve, StableStates) {
        let p = GridParams::nominal(rows, cols);
        let g = CouplingMap::uniform(rows, cols, p.conductance);
        let curve = ReactionCurve::calibrated();
        let s = stable_states(&curve, p.bias).unwrap();
        (p, g, curve, s)
    }

    #[test]
    fn uniform_low_field_is_stationary() {
        let (p, g, curve, s) = setup(6, 7);
        let state = uniform_init(&p, &s);
        let d = rhs(&state, &g, &p, &curve).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn single_high_cell_is_equilibrium() {
        let (p, g, curve, _) = setup(1, 1);
        let state = GridState::filled(1, 1, 1.75);
        let d = rhs(&state, &g, &p, &curve).unwrap();
        assert!(d[0].abs() < 1e-12);
    }

    #[test]
    fn center_cell_rhs_matches_hand_sum() {
        let (p, g, curve, s) = setup(3, 3);
        let mut state = uniform_init(&p, &s);
        let centre = Cell::new(1, 1);
        state.set(centre, s.high);
        let d = rhs(&state, &g, &p, &curve).unwrap();
        let expected = (4.0 * 25.0 * (s.low - s.high) + 21.0 - curve.current(s.high)) / 500.0;
        assert!((d[4] - expected).abs() < 1e-15);
        // edge neighbour sees one excited cell and two resting ones
        let expected_nb = (25.0 * (s.high - s.low) + 21.0 - curve.current(s.low)) / 500.0;
        assert!((d[1] - expected_nb).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_coupling() {
        let (p, _, curve, _) = setup(4, 4);
        let g = CouplingMap::uniform(4, 5, 25.0);
        assert!(matches!(Lattice::new(&p, &g, &curve), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_unstable_dt() {
        let (p, g, curve, _) = setup(4, 4);
        let p = p.with_dt(50.0);
        assert!(matches!(Lattice::new(&p, &g, &curve), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn divergence_names_first_cell() {
        let (p, g, curve, s) = setup(2, 3);
        let mut state = uniform_init(&p, &s);
        state.set(Cell::new(1, 2), f64::NAN);
        let mut lat = Lattice::new(&p, &g, &curve).unwrap();
        match lat.step(&mut state) {
            Err(Error::Divergence { cell, .. }) => assert_eq!(cell, Cell::new(1, 2)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn excite_sets_high_and_checks_range() {
        let (p, _, _, s) = setup(3, 3);
        let mut state = uniform_init(&p, &s);
        let stim = excite(&mut state, Cell::new(2, 1), &s, &Excitation::STATE_ONLY).unwrap();
        assert!(stim.is_empty());
        assert_eq!(state.get(Cell::new(2, 1)), s.high);
        assert!(matches!(
            excite(&mut state, Cell::new(3, 0), &s, &Excitation::default()),
            Err(Error::OutOfRange { .. })
        ));
        let stim = excite(&mut state, Cell::new(0, 0), &s, &Excitation::default()).unwrap();
        assert_eq!(stim.len(), 1);
        assert_eq!((stim[0].drive, stim[0].start, stim[0].end), (Drive::Hold, 0.0, DEFAULT_HOLD));
        let both = Excitation { pulse: Some(CurrentPulse { amplitude: 30.0, duration: 5.0 }), ..Excitation::default() };
        let stim = excite(&mut state, Cell::new(1, 1), &s, &both).unwrap();
        assert_eq!(stim[1].drive, Drive::Current(30.0));
        let inert = Excitation { set_high: false, hold: None, pulse: None };
        assert!(excite(&mut state, Cell::new(1, 1), &s, &inert).is_err());
    }

    #[test]
    fn coupling_edges_are_symmetric() {
        let mut g = CouplingMap::uniform(3, 4, 25.0);
        g.set_edge(Cell::new(1, 2), Cell::new(1, 1), 3.0).unwrap();
        assert_eq!(g.edge(Cell::new(1, 1), Cell::new(1, 2)), Some(3.0));
        assert_eq!(g.edge(Cell::new(1, 2), Cell::new(1, 1)), Some(3.0));
        assert_eq!(g.edge(Cell::new(0, 0), Cell::new(1, 1)), None);
        assert!(g.set_edge(Cell::new(0, 0), Cell::new(2, 0), 1.0).is_err());
        g.isolate(Cell::new(0, 0));
        assert_eq!(g.connected_neighbors(Cell::new(0, 0)).count(), 0);
        assert_eq!(g.coupled_cells(), 11);
    }

    #[test]
    fn neighbors_follow_nesw_order() {
        let n: Vec<_> = Cell::new(1, 1).neighbors(3, 3).collect();
        assert_eq!(n, [Cell::new(0, 1), Cell::new(1, 2), Cell::new(2, 1), Cell::new(1, 0)]);
        assert_eq!(Cell::new(0, 0).neighbors(1, 1).count(), 0);
    }

    #[test]
    fn snapshot_scale() {
        let state = GridState::from_voltages(1, 3, vec![0.0, 0.9, 2.5]).unwrap();
        assert_eq!(state.snapshot().pixels(), &[0, 128, 255]);
    }
}

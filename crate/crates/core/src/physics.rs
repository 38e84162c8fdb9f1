//! Cell current response `J(v)` and the equilibria it induces under a bias.
//!
//! A cell sits in equilibrium wherever `J(v) = I_B`. For an N-shaped
//! response there are one or three such points; with three, the outer two
//! (`V_L`, `V_H`) are stable and the middle one is the saddle separating
//! them. The network is excitable when three equilibria exist and the bias
//! is below the local maximum `J_p`.
//!
//! Units throughout: volts, microamperes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::GridParams;
use crate::wavesim::{self, SpeedMeasurement};

/// Grid spacing used when scanning for sign changes of `J(v) - I_B`.
pub const ROOT_SCAN_STEP: f64 = 1e-3;
/// Residual `|J(v) - I_B|` below which a bracketed root is accepted.
pub const ROOT_TOLERANCE: f64 = 1e-9;
/// Bias distance from an extremum below which the extremum is treated as a
/// tangent (double) root.
pub const TANGENCY_TOLERANCE: f64 = 1e-6;

/// Slope of the default cubic, obtained by running [`calibrate_slope`] on the
/// nominal parameters against a 16.92 ns transition interval.
pub const CALIBRATED_SLOPE: f64 = 598.730_468_75;

/// Roots of the cubic at its anchor bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub v_low: f64,
    pub v_mid: f64,
    pub v_high: f64,
    /// Bias at which the three voltages above are equilibria (uA).
    pub bias: f64,
}

impl Default for Anchors {
    fn default() -> Self {
        Self { v_low: 0.97, v_mid: 1.15, v_high: 1.75, bias: 21.0 }
    }
}

/// `J(v) = bias + slope * (v - v_low) * (v - v_mid) * (v - v_high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCurve {
    /// uA / V^3
    pub slope: f64,
    pub anchors: Anchors,
}

impl CubicCurve {
    pub fn new(slope: f64, anchors: Anchors) -> Result<Self> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::Curve(format!("cubic slope must be positive, got {slope}")));
        }
        let Anchors { v_low, v_mid, v_high, bias } = anchors;
        if !(v_low < v_mid && v_mid < v_high) || !bias.is_finite() {
            return Err(Error::Curve(format!(
                "anchor roots must satisfy v_low < v_mid < v_high, got ({v_low}, {v_mid}, {v_high})"
            )));
        }
        Ok(Self { slope, anchors })
    }

    #[inline]
    pub fn current(&self, v: f64) -> f64 {
        let a = &self.anchors;
        a.bias + self.slope * (v - a.v_low) * (v - a.v_mid) * (v - a.v_high)
    }

    #[inline]
    pub fn derivative(&self, v: f64) -> f64 {
        let a = &self.anchors;
        let (p, q, r) = (v - a.v_low, v - a.v_mid, v - a.v_high);
        self.slope * (q * r + p * r + p * q)
    }

    /// Voltages of the local maximum and local minimum, from the roots of
    /// `J'(v) = 0`.
    pub fn critical_points(&self) -> (f64, f64) {
        let a = &self.anchors;
        let s1 = a.v_low + a.v_mid + a.v_high;
        let s2 = a.v_low * a.v_mid + a.v_mid * a.v_high + a.v_low * a.v_high;
        // 3v^2 - 2 s1 v + s2 = 0
        let disc = (s1 * s1 - 3.0 * s2).sqrt();
        ((s1 - disc) / 3.0, (s1 + disc) / 3.0)
    }
}

/// Continuous piecewise-linear response through measured `(v, J)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCurve {
    breakpoints: Vec<(f64, f64)>,
    peak: usize,
    valley: usize,
}

impl PiecewiseCurve {
    /// Builds the curve and checks that it rises, falls, then rises again.
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 4 {
            return Err(Error::Curve(format!(
                "a piecewise curve needs at least 4 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.iter().any(|(v, j)| !v.is_finite() || !j.is_finite()) {
            return Err(Error::Curve("breakpoints must be finite".into()));
        }
        for (k, w) in breakpoints.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::Curve(format!(
                    "breakpoint voltages must be strictly increasing (entries {k} and {})",
                    k + 1
                )));
            }
        }

        // Each segment must be strictly rising or falling; collapse the signs
        // into runs and require exactly (+, -, +).
        let mut runs: Vec<(bool, usize)> = Vec::new();
        for (k, w) in breakpoints.windows(2).enumerate() {
            let dj = w[1].1 - w[0].1;
            if dj == 0.0 {
                return Err(Error::Curve(format!("segment {k} is flat")));
            }
            let rising = dj > 0.0;
            match runs.last() {
                Some(&(r, _)) if r == rising => {}
                _ => runs.push((rising, k)),
            }
        }
        let shape: Vec<bool> = runs.iter().map(|r| r.0).collect();
        if shape != [true, false, true] {
            return Err(Error::Curve("curve must be N-shaped (rise, fall, rise)".into()));
        }
        Ok(Self { peak: runs[1].1, valley: runs[2].1, breakpoints })
    }

    /// Parses the two-column text format: one `v J` pair per line, blank
    /// lines and `#` comments ignored. Columns may be separated by
    /// whitespace or a comma.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> =
                line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected two columns, found {}", fields.len()),
                });
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|e| Error::Parse { line: idx + 1, message: format!("{s:?}: {e}") });
            points.push((num(fields[0])?, num(fields[1])?));
        }
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    fn segment(&self, v: f64) -> (usize, bool) {
        let bp = &self.breakpoints;
        let last = bp.len() - 2;
        if v < bp[0].0 {
            return (0, true);
        }
        if v > bp[bp.len() - 1].0 {
            return (last, true);
        }
        // index of the first breakpoint strictly greater than v
        let upper = bp.partition_point(|p| p.0 <= v);
        (upper.saturating_sub(1).min(last), false)
    }

    fn eval(&self, v: f64) -> Evaluation {
        let (k, extrapolated) = self.segment(v);
        let (v0, j0) = self.breakpoints[k];
        let (v1, j1) = self.breakpoints[k + 1];
        let slope = (j1 - j0) / (v1 - v0);
        Evaluation { current: j0 + slope * (v - v0), extrapolated }
    }

    fn derivative(&self, v: f64) -> f64 {
        let (k, _) = self.segment(v);
        let (v0, j0) = self.breakpoints[k];
        let (v1, j1) = self.breakpoints[k + 1];
        (j1 - j0) / (v1 - v0)
    }
}

/// Result of evaluating a curve, with a flag set when a piecewise curve had
/// to extend a terminal segment beyond its breakpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub current: f64,
    pub extrapolated: bool,
}

/// The nonlinear current response of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReactionCurve {
    Cubic(CubicCurve),
    Piecewise(PiecewiseCurve),
}

impl ReactionCurve {
    /// Cubic anchored at (0.97, 1.15, 1.75) V for 21 uA with the frozen
    /// calibrated slope.
    pub fn calibrated() -> Self {
        Self::Cubic(CubicCurve { slope: CALIBRATED_SLOPE, anchors: Anchors::default() })
    }

    pub fn cubic(slope: f64, anchors: Anchors) -> Result<Self> {
        CubicCurve::new(slope, anchors).map(Self::Cubic)
    }

    /// `J(v)` in uA.
    #[inline]
    pub fn current(&self, v: f64) -> f64 {
        match self {
            Self::Cubic(c) => c.current(v),
            Self::Piecewise(p) => p.eval(v).current,
        }
    }

    pub fn evaluate(&self, v: f64) -> Evaluation {
        match self {
            Self::Cubic(c) => Evaluation { current: c.current(v), extrapolated: false },
            Self::Piecewise(p) => p.eval(v),
        }
    }

    /// `dJ/dv` in uA/V. Piecewise curves return the slope of the segment
    /// containing `v`.
    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            Self::Cubic(c) => c.derivative(v),
            Self::Piecewise(p) => p.derivative(v),
        }
    }

    /// `(v_peak, J_p)`: the local maximum.
    pub fn peak(&self) -> (f64, f64) {
        match self {
            Self::Cubic(c) => {
                let v = c.critical_points().0;
                (v, c.current(v))
            }
            Self::Piecewise(p) => p.breakpoints[p.peak],
        }
    }

    /// `(v_valley, J_valley)`: the local minimum.
    pub fn valley(&self) -> (f64, f64) {
        match self {
            Self::Cubic(c) => {
                let v = c.critical_points().1;
                (v, c.current(v))
            }
            Self::Piecewise(p) => p.breakpoints[p.valley],
        }
    }

    /// A voltage interval guaranteed to contain every root of
    /// `J(v) = bias`.
    fn root_bounds(&self, bias: f64) -> (f64, f64) {
        match self {
            Self::Cubic(c) => {
                // Cauchy bound on the monic cubic (J(v) - bias) / slope.
                let a = &c.anchors;
                let s1 = a.v_low + a.v_mid + a.v_high;
                let s2 = a.v_low * a.v_mid + a.v_mid * a.v_high + a.v_low * a.v_high;
                let s3 = a.v_low * a.v_mid * a.v_high;
                let c0 = -s3 + (a.bias - bias) / c.slope;
                let bound = 1.0 + s1.abs().max(s2.abs()).max(c0.abs());
                (-bound, bound)
            }
            Self::Piecewise(p) => {
                let bp = &p.breakpoints;
                let (v0, j0) = bp[0];
                let (v1, j1) = bp[1];
                let (vn1, jn1) = bp[bp.len() - 2];
                let (vn, jn) = bp[bp.len() - 1];
                // Solve the terminal lines for the bias to cover extrapolated roots.
                let left = v0 + (bias - j0) * (v1 - v0) / (j1 - j0);
                let right = vn + (bias - jn) * (vn - vn1) / (jn - jn1);
                (left.min(v0) - 1e-3, right.max(vn) + 1e-3)
            }
        }
    }
}

/// One equilibrium of a single uncoupled cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub voltage: f64,
    /// `J'(v)` at the equilibrium; positive means stable.
    pub slope: f64,
}

impl Equilibrium {
    pub fn is_stable(&self) -> bool {
        self.slope > 0.0
    }
}

/// Equilibria of `J(v) = I_B`.
///
/// With three equilibria `low < mid < high`. A monostable bias reports its
/// single equilibrium in both `low` and `high` with `mid = None`. A bias
/// tangent to the local maximum reports `low == mid == v_peak`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableStates {
    pub bias: f64,
    pub low: f64,
    pub mid: Option<f64>,
    pub high: f64,
    pub excitable: bool,
    /// `J_p - I_B` in uA.
    pub margin: f64,
    pub equilibria: Vec<Equilibrium>,
}

impl fmt::Display for StableStates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V_L = {:.4} V", self.low)?;
        if let Some(mid) = self.mid {
            write!(f, ", V_mid = {mid:.4} V")?;
        }
        write!(
            f,
            ", V_H = {:.4} V at I_B = {} uA ({})",
            self.high,
            self.bias,
            if self.excitable { "excitable" } else { "not excitable" }
        )
    }
}

fn bisect_root(curve: &ReactionCurve, bias: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = |v: f64| curve.current(v) - bias;
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid.abs() < ROOT_TOLERANCE || mid == lo || mid == hi {
            return mid;
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every real root of `J(v) = bias` in ascending order, located by a
/// [`ROOT_SCAN_STEP`] sign-change scan and refined by bisection.
pub fn equilibrium_voltages(curve: &ReactionCurve, bias: f64) -> Vec<f64> {
    let (lo, hi) = curve.root_bounds(bias);
    let n = ((hi - lo) / ROOT_SCAN_STEP).ceil() as usize;
    let g = |v: f64| curve.current(v) - bias;

    let mut roots = Vec::new();
    let mut prev_v = lo;
    let mut prev_g = g(lo);
    if prev_g == 0.0 {
        roots.push(lo);
    }
    for k in 1..=n {
        let v = lo + k as f64 * ROOT_SCAN_STEP;
        let gv = g(v);
        if gv == 0.0 {
            roots.push(v);
        } else if prev_g != 0.0 && (prev_g < 0.0) != (gv < 0.0) {
            roots.push(bisect_root(curve, bias, prev_v, v));
        }
        prev_v = v;
        prev_g = gv;
    }
    roots
}

/// Equilibria and excitability of an uncoupled cell at bias `bias` (uA).
pub fn stable_states(curve: &ReactionCurve, bias: f64) -> Result<StableStates> {
    if !(bias.is_finite() && bias > 0.0) {
        return Err(Error::InvalidParameter(format!("bias current must be positive, got {bias}")));
    }
    let (v_peak, j_peak) = curve.peak();
    let (v_valley, j_valley) = curve.valley();
    let margin = j_peak - bias;
    let roots = equilibrium_voltages(curve, bias);
    let equilibria: Vec<Equilibrium> =
        roots.iter().map(|&v| Equilibrium { voltage: v, slope: curve.derivative(v) }).collect();

    let near_peak = margin.abs() <= TANGENCY_TOLERANCE;
    let near_valley = (bias - j_valley).abs() <= TANGENCY_TOLERANCE;

    let (low, mid, high, excitable) = match roots.as_slice() {
        &[l, m, h] if !near_peak && !near_valley => (l, Some(m), h, margin > 0.0),
        _ if near_peak => {
            let high = roots.last().copied().unwrap_or(v_peak).max(v_peak);
            (v_peak, Some(v_peak), high, false)
        }
        _ if near_valley => {
            let low = roots.first().copied().unwrap_or(v_valley).min(v_valley);
            (low, Some(v_valley), v_valley, false)
        }
        &[only] => (only, None, only, false),
        other => {
            return Err(Error::Curve(format!(
                "found {} equilibria at I_B = {bias}; the curve is not N-shaped",
                other.len()
            )))
        }
    };

    Ok(StableStates { bias, low, mid, high, excitable, margin, equilibria })
}

/// A calibrated cubic together with the evidence for it.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub curve: ReactionCurve,
    pub measurement: SpeedMeasurement,
    /// Every `(slope, t_p)` evaluated during the search, in order.
    pub trace: Vec<(f64, Option<f64>)>,
}

const SLOPE_MIN: f64 = 1.0;
const SLOPE_MAX: f64 = 1e5;
const SLOPE_GUESS: f64 = 100.0;

/// Finds the cubic slope whose corridor transition interval matches
/// `target_tp` (ns), keeping the anchor roots fixed.
///
/// The bracket is grown by doubling or halving from 100 uA/V^3; a front
/// that fails to traverse counts as "too slow". The bracket is then bisected.
pub fn calibrate_slope(target_tp: f64, params: &GridParams, anchors: Anchors, threshold: f64) -> Result<Calibration> {
    if !(target_tp.is_finite() && target_tp > 0.0) {
        return Err(Error::InvalidParameter(format!("target transition interval must be positive, got {target_tp}")));
    }
    let mut trace: Vec<(f64, Option<f64>)> = Vec::new();
    let mut measure = |slope: f64| -> Result<Option<f64>> {
        let curve = ReactionCurve::cubic(slope, anchors)?;
        let tp = match wavesim::measure_tp(params, &curve, threshold) {
            Ok(m) => Some(m.t_p),
            Err(Error::Measurement(_)) | Err(Error::NotExcitable { .. }) => None,
            Err(e) => return Err(e),
        };
        trace.push((slope, tp));
        Ok(tp)
    };
    let too_slow = |tp: Option<f64>| tp.is_none_or(|t| t > target_tp);

    let mut slope = SLOPE_GUESS;
    let first = measure(slope)?;
    let (mut slow, mut fast) = if too_slow(first) {
        loop {
            let next = slope * 2.0;
            if next > SLOPE_MAX {
                return Err(Error::Calibration {
                    reason: format!("no slope up to {SLOPE_MAX} reaches t_p = {target_tp} ns"),
                    trace,
                });
            }
            if !too_slow(measure(next)?) {
                break (slope, next);
            }
            slope = next;
        }
    } else {
        loop {
            let next = slope / 2.0;
            if next < SLOPE_MIN {
                return Err(Error::Calibration {
                    reason: format!("no slope down to {SLOPE_MIN} is slow enough for t_p = {target_tp} ns"),
                    trace,
                });
            }
            if too_slow(measure(next)?) {
                break (next, slope);
            }
            slope = next;
        }
    };

    let mut best: Option<(f64, f64)> = None;
    for _ in 0..80 {
        let mid = 0.5 * (slow + fast);
        let tp = measure(mid)?;
        if let Some(t) = tp {
            let err = (t - target_tp).abs();
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((mid, err));
            }
            if err <= 1e-6 * target_tp {
                break;
            }
        }
        if too_slow(tp) {
            slow = mid;
        } else {
            fast = mid;
        }
        if (fast - slow).abs() <= 1e-12 * fast {
            break;
        }
    }

    let Some((slope, _)) = best else {
        return Err(Error::Calibration {
            reason: "the front never traversed the corridor inside the bracket".into(),
            trace,
        });
    };
    let curve = ReactionCurve::cubic(slope, anchors)?;
    let measurement = wavesim::measure_tp(params, &curve, threshold)?;
    if (measurement.t_p - target_tp).abs() > 0.02 * target_tp {
        return Err(Error::Calibration {
            reason: format!("best slope {slope} gives t_p = {} ns, more than 2% from {target_tp} ns", measurement.t_p),
            trace,
        });
    }
    Ok(Calibration { curve, measurement, trace })
}

//! Run configuration: a TOML file with one table per concern. Every key is
//! optional; missing keys take the nominal values.

use std::path::{Path, PathBuf};

use autowave::lattice::{CurrentPulse, DEFAULT_HOLD};
use autowave::physics::{Anchors, PiecewiseCurve, CALIBRATED_SLOPE};
use autowave::wavesim::DEFAULT_THRESHOLD;
use autowave::{stable_states, CouplingMode, Excitation, FixtureKind, GridParams, ReactionCurve, StableStates};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub curve: CurveSection,
    pub wave: WaveSection,
    pub coupling: CouplingSection,
    pub excitation: ExcitationSection,
    pub problem: ProblemSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
    /// Directory that relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSection::default(),
            curve: CurveSection::default(),
            wave: WaveSection::default(),
            coupling: CouplingSection::default(),
            excitation: ExcitationSection::default(),
            problem: ProblemSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    /// uS
    pub conductance: f64,
    /// fF
    pub capacitance: f64,
    /// uA
    pub bias: f64,
    /// ns
    pub dt: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let p = GridParams::nominal(21, 21);
        Self {
            rows: p.rows,
            cols: p.cols,
            conductance: p.conductance,
            capacitance: p.capacitance,
            bias: p.bias,
            dt: p.dt,
        }
    }
}

/// Either an inline cubic, a TOML curve file written by `calibrate`, or a
/// two-column piecewise table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub slope: f64,
    pub v_low: f64,
    pub v_mid: f64,
    pub v_high: f64,
    pub anchor_bias: f64,
    pub file: Option<PathBuf>,
    pub piecewise: Option<PathBuf>,
}

impl Default for CurveSection {
    fn default() -> Self {
        let a = Anchors::default();
        Self {
            slope: CALIBRATED_SLOPE,
            v_low: a.v_low,
            v_mid: a.v_mid,
            v_high: a.v_high,
            anchor_bias: a.bias,
            file: None,
            piecewise: None,
        }
    }
}

impl CurveSection {
    pub fn anchors(&self) -> Anchors {
        Anchors { v_low: self.v_low, v_mid: self.v_mid, v_high: self.v_high, bias: self.anchor_bias }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    /// Winner threshold V_w (V).
    pub threshold: f64,
    /// Target transition interval for `calibrate` (ns).
    pub target_tp: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, target_tp: 16.92 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    Threshold,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub mode: CouplingKind,
    pub theta: u8,
    pub alpha: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { mode: CouplingKind::Threshold, theta: 127, alpha: 1.0 }
    }
}

impl CouplingSection {
    pub fn mode(&self) -> CouplingMode {
        match self.mode {
            CouplingKind::Threshold => CouplingMode::Threshold { theta: self.theta },
            CouplingKind::Proportional => CouplingMode::Proportional { alpha: self.alpha },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationKind {
    /// Program to V_H and clamp for `hold` ns.
    Hold,
    /// Program to V_H and inject `amplitude` uA for `duration` ns.
    Pulse,
    /// Program to V_H only.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationSection {
    pub mode: ExcitationKind,
    pub hold: f64,
    pub amplitude: f64,
    pub duration: f64,
}

impl Default for ExcitationSection {
    fn default() -> Self {
        Self { mode: ExcitationKind::Hold, hold: DEFAULT_HOLD, amplitude: 30.0, duration: 5.0 }
    }
}

impl ExcitationSection {
    pub fn excitation(&self) -> Excitation {
        match self.mode {
            ExcitationKind::Hold => Excitation::held(self.hold),
            ExcitationKind::State => Excitation::STATE_ONLY,
            ExcitationKind::Pulse => Excitation {
                set_high: true,
                hold: None,
                pulse: Some(CurrentPulse { amplitude: self.amplitude, duration: self.duration }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Generated fixture; ignored when `template` is set.
    pub fixture: Option<FixtureKind>,
    /// PGM template image.
    pub template: Option<PathBuf>,
    /// `[row, col]`. Defaults to the first free cell in row-major order, and
    /// the target to the last one (the enclosed centre of a sealed fixture).
    pub start: Option<[usize; 2]>,
    pub target: Option<[usize; 2]>,
    pub max_iterations: Option<usize>,
    /// Transition interval used for the timeouts (ns); measured when absent.
    pub t_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub biases: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { biases: vec![18.0, 19.0, 20.0, 21.0, 22.0, 23.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Frame interval for `solve` (ns); no frames when absent.
    pub frame_every: Option<f64>,
    pub overlay: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), frame_every: None, overlay: true }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn params(&self) -> GridParams {
        let g = &self.grid;
        GridParams {
            rows: g.rows,
            cols: g.cols,
            conductance: g.conductance,
            capacitance: g.capacitance,
            bias: g.bias,
            dt: g.dt,
        }
    }

    pub fn curve(&self) -> Result<ReactionCurve, CliError> {
        let c = &self.curve;
        match (&c.file, &c.piecewise) {
            (Some(_), Some(_)) => Err(CliError::Config("set at most one of curve.file and curve.piecewise".into())),
            (Some(file), None) => load_curve(&self.resolve(file)),
            (None, Some(table)) => Ok(ReactionCurve::Piecewise(PiecewiseCurve::load(self.resolve(table))?)),
            (None, None) => Ok(ReactionCurve::cubic(c.slope, c.anchors())?),
        }
    }

    /// Checks that every physical value is positive.
    pub fn check_physical(&self) -> Result<(), CliError> {
        let g = &self.grid;
        for (name, value) in [
            ("grid.conductance", g.conductance),
            ("grid.capacitance", g.capacitance),
            ("grid.bias", g.bias),
            ("grid.dt", g.dt),
            ("wave.threshold", self.wave.threshold),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if g.rows == 0 || g.cols == 0 {
            return Err(CliError::Config(format!("grid must be at least 1x1, got {}x{}", g.rows, g.cols)));
        }
        if let Some(every) = self.output.frame_every {
            if !(every.is_finite() && every > 0.0) {
                return Err(CliError::Config(format!("output.frame_every must be positive, got {every}")));
            }
        }
        self.excitation.excitation().validate()?;
        Ok(())
    }

    /// [`check_physical`](Self::check_physical) plus the winner threshold.
    /// Returns the stable states at the configured bias.
    pub fn validate(&self, curve: &ReactionCurve) -> Result<StableStates, CliError> {
        self.check_physical()?;
        let g = &self.grid;
        let stable = stable_states(curve, g.bias)?;
        let vw = self.wave.threshold;
        if !(vw > stable.low && vw < stable.high) {
            return Err(CliError::Config(format!(
                "wave.threshold = {vw} V must lie strictly between the stable states ({stable})"
            )));
        }
        Ok(stable)
    }
}

pub fn load_curve(path: &Path) -> Result<ReactionCurve, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read curve file {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("curve file {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_nominal() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.params(), GridParams::nominal(21, 21));
        assert_eq!(cfg.curve().unwrap(), ReactionCurve::calibrated());
        assert_eq!(cfg.coupling.mode(), CouplingMode::default());
        assert_eq!(cfg.excitation.excitation(), Excitation::default());
        let s = cfg.validate(&ReactionCurve::calibrated()).unwrap();
        assert!((s.low - 0.97).abs() < 1e-6);
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
            seed = 9
            [grid]
            rows = 5
            bias = 22.5
            [coupling]
            mode = "proportional"
            alpha = 0.5
            [excitation]
            mode = "pulse"
            amplitude = 40.0
            [problem]
            fixture = "maze"
            start = [1, 1]
            [sweep]
            biases = []
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!((cfg.grid.rows, cfg.grid.cols), (5, 21));
        assert_eq!(cfg.coupling.mode(), CouplingMode::Proportional { alpha: 0.5 });
        assert_eq!(cfg.excitation.excitation().pulse.unwrap().amplitude, 40.0);
        assert_eq!(cfg.problem.fixture, Some(FixtureKind::Maze));
        assert_eq!(cfg.problem.start, Some([1, 1]));
        assert!(cfg.sweep.biases.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[grid]\nrowz = 3\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn threshold_outside_stable_states_names_them() {
        let mut cfg = RunConfig::default();
        cfg.wave.threshold = 1.9;
        let err = cfg.validate(&ReactionCurve::calibrated()).unwrap_err().to_string();
        assert!(err.contains("V_L = 0.9700 V") && err.contains("V_H = 1.7500 V"), "{err}");
    }

    #[test]
    fn non_positive_values_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.grid.dt = 0.0;
        assert!(cfg.validate(&ReactionCurve::calibrated()).is_err());
        let mut cfg = RunConfig::default();
        cfg.grid.capacitance = -1.0;
        assert!(cfg.validate(&ReactionCurve::calibrated()).is_err());
    }

    #[test]
    fn curve_sources_are_exclusive() {
        let mut cfg = RunConfig::default();
        cfg.curve.file = Some("a.toml".into());
        cfg.curve.piecewise = Some("b.txt".into());
        assert!(matches!(cfg.curve(), Err(CliError::Config(_))));
    }
}

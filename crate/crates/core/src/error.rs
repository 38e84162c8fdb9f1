use thiserror::Error;

use crate::lattice::Cell;

/// Errors produced by the simulator, the solvers and the file loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cell {cell} is outside the {rows}x{cols} grid")]
    OutOfRange { cell: Cell, rows: usize, cols: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid reaction curve: {0}")]
    Curve(String),

    #[error("integration diverged at cell {cell} (t = {time} ns)")]
    Divergence { cell: Cell, time: f64 },

    /// The slope search could not bracket the requested transition time.
    /// `trace` holds every `(slope, t_p)` pair that was evaluated; `None`
    /// means the front failed to traverse the corridor at that slope.
    #[error("calibration failed: {reason}")]
    Calibration { reason: String, trace: Vec<(f64, Option<f64>)> },

    #[error("speed measurement failed: {0}")]
    Measurement(String),

    #[error("network is not excitable at I_B = {bias} uA (J_p = {peak} uA)")]
    NotExcitable { bias: f64, peak: f64 },

    #[error("PGM parse error at byte {offset}: {message}")]
    Pgm { offset: usize, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub const EXIT_NO_PATH: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] autowave::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use autowave::Error as E;
        match self {
            CliError::Config(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Core(E::Divergence { .. } | E::Calibration { .. } | E::Measurement(_)) => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_CONFIG,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}: only d = 2 is supported here")]
    UnsupportedDimension(usize),

    #[error("position {position} lies outside the domain of radius {radius}")]
    OutOfDomain { position: f64, radius: f64 },

    #[error("volume has {n} points; at most {max} are supported")]
    TooLarge { n: usize, max: usize },

    #[error("no compatible volume found after {attempts} attempts")]
    ConstructionFailure { attempts: usize },

    #[error("volume violates the coincidence-closure condition; the image-space action is multi-valued")]
    IncompatibleVolume,

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("shape error in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("non-finite activation (sample {index})")]
    Numeric { index: usize },

    #[error("insufficient data: need at least {need}, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("all {restarts} training restarts diverged")]
    TrainingFailure { restarts: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

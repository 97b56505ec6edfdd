use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter was outside its admissible range. `field` names the offending input.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("state has support on photon-number sector {sector} beyond cutoff {n_max}")]
    Truncation { sector: usize, n_max: usize },

    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),

    #[error("bin {bin} has {count} counts but model probability {prob:e}")]
    DegenerateSupport { bin: usize, count: f64, prob: f64 },

    #[error("retained probability {0:e} is too small for the requested threshold")]
    ThresholdTooHigh(f64),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("imaginary residue {0:e} exceeds tolerance")]
    NumericalConsistency(f64),

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { field, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

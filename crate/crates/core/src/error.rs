use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped so the CLI can map each family onto a distinct exit
/// status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid preset `{spec}`: {reason}")]
    InvalidPreset { spec: String, reason: String },

    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("density is negative or non-finite ({value}) at point {point:?}")]
    InvalidDensityValue { value: f64, point: Vec<f64> },

    #[error("normalization check failed: E[L] = {mean} +/- {stderr}")]
    NotNormalized { mean: f64, stderr: f64 },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("transport is not invertible: {0}")]
    NotInvertible(String),

    #[error("potential is not 1-convex: Hessian eigenvalue {eigenvalue} < -1 at {point:?}")]
    NotOneConvex { eigenvalue: f64, point: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn preset(spec: &str, reason: impl Into<String>) -> Self {
        Error::InvalidPreset {
            spec: spec.to_string(),
            reason: reason.into(),
        }
    }
}

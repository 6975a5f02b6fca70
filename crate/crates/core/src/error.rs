use thiserror::Error;

/// Errors raised by graph construction, spectral routines and probes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{what} must sum to 1, got {sum}")]
    NotNormalized { what: String, sum: f64 },

    #[error("matrix is not symmetric (max |M - M^T| = {max_asymmetry:e})")]
    NonSymmetric { max_asymmetry: f64 },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("rank k = {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("k = {k} exceeds the number of positive eigenvalues ({positive})")]
    InsufficientPositiveEigenvalues { k: usize, positive: usize },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("ordering hypothesis violated: {0}")]
    OrderingViolated(String),

    #[error("regularization strength must be positive, got {0}")]
    NonPositiveEta(f64),

    #[error("node set is empty")]
    EmptySet,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("zero-norm weight vector")]
    ZeroNorm,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

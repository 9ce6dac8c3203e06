use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LceError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty set or support")]
    Empty,

    #[error("negative mass {value} at index {index:?}")]
    NegativeMass { index: Vec<i64>, value: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("truncated tail mass {deficit:e} exceeds tolerance {tolerance:e}")]
    TailTooLarge { deficit: f64, tolerance: f64 },

    #[error("result of {cells} cells exceeds the memory cap of {cap} cells")]
    MemoryCap { cells: u128, cap: u128 },

    #[error("FFT and direct convolution disagree by {discrepancy:e} at {index:?}")]
    FftMismatch { index: Vec<i64>, discrepancy: f64 },

    #[error("support of {size} points exceeds the LP budget of {budget}")]
    LpBudget { size: usize, budget: usize },

    #[error("degenerate covariance (det = {0:e})")]
    DegenerateCovariance(f64),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("argmax search failed to bracket a maximum at x = {0}")]
    ArgmaxBracket(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LceError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LceError::InvalidInput(msg.into()))
}

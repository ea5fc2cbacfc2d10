use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty after filtering")]
    EmptyDataset,
    #[error("invalid superposition dimension d_max = {0} (expected 1..=3)")]
    InvalidDMax(usize),
    #[error("invalid scaling state: expected {expected}, found {found}")]
    InvalidScaling { expected: String, found: String },
    #[error("train and test scaling states differ")]
    ScalingMismatch,
    #[error("dense evaluation refused: N = {n} exceeds the dense limit {limit}")]
    DenseLimitExceeded { n: usize, limit: usize },
    #[error("point {index} lies outside [-1/2, 1/2)^q")]
    PointOutOfDomain { index: usize },
    #[error("eta = {0} < 1, bound not applicable")]
    EtaTooSmall(f64),
    #[error("total variance vanishes, sensitivity indices undefined")]
    ZeroVariance,
    #[error("no convergence within {0} iterations")]
    NonConvergence(usize),
    #[error("CG reached the iteration cap {max_iter} (relative residual {residual:.3e})")]
    MaxIterations { max_iter: usize, residual: f64 },
    #[error("CG breakdown: p^T A p = {0:.3e} (operator not positive definite)")]
    Breakdown(f64),
    #[error("invalid window set: {0}")]
    InvalidWindows(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_)
                | Error::MaxIterations { .. }
                | Error::Breakdown(_)
                | Error::ZeroVariance
                | Error::EtaTooSmall(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

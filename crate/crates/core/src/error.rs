use thiserror::Error;

/// Errors raised by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    NotPsd { min_eigenvalue: f64, trace: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("weighted set has no positive weight")]
    EmptySet,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("negative distance {value} at ({row}, {col})")]
    InvalidDistance { row: usize, col: usize, value: f64 },

    #[error("distances cannot reach the requested average entropy: {0}")]
    DegenerateDistances(String),

    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("silhouettes need at least two clusters")]
    NeedsTwoClusters,

    #[error("the permutation test needs the raw grouped curves")]
    RequiresRawCurves,

    #[error("group `{group}` has {got} curves, at least 2 are required")]
    TooFewCurves { group: String, got: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

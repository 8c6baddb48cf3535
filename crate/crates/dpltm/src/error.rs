//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, fitting, inference, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("non-finite objective at epoch {epoch} ({context})")]
    NonFinite { epoch: usize, context: String },

    #[error(
        "information matrix is numerically singular (condition {cond:.3e} exceeds 1e12); \
         coefficients {i} and {j} are the most collinear pair"
    )]
    SingularInformation { cond: f64, i: usize, j: usize },

    #[error("no comparable pairs: need at least one event i with T_i <= T_j")]
    NoComparablePairs,

    #[error("degenerate truth: sum of squared g0 values over the test set is zero")]
    DegenerateTruth,

    #[error("stale or mismatched activation tape")]
    TapeMismatch,

    #[error("bounded search failed: {0}")]
    SearchFailed(String),

    #[error("model file error: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

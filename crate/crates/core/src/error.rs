use thiserror::Error;

/// Errors produced by the modelling, certification and synthesis pipeline.
#[derive(Debug, Error)]
pub enum SmpError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("eigen-decomposition did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: String, reason: String },

    #[error("index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("SDP solver failure: {0}")]
    Solver(String),

    #[error("synthesis LMIs infeasible at the requested margin (phase-1 margin {margin:e})")]
    SynthesisInfeasible { margin: f64 },

    #[error("gain extraction failed: {0}")]
    ExtractionFailure(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate trajectory data: {0}")]
    Degenerate(String),

    #[error("{source_name}:{line}:{column}: at `{field}`: {message}")]
    Parse {
        source_name: String,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SmpError>;

pub(crate) fn dim_err(context: &str, expected: impl ToString, actual: impl ToString) -> SmpError {
    SmpError::DimensionMismatch {
        context: context.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}

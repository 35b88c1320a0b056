use thiserror::Error;

use crate::nfxp::ThetaEstimate;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input file does not match the expected schema (missing column, bad header).
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell failed to parse; carries the 1-based line number of the offending row.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Data violates a structural invariant (gap in periods, duplicate rows, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The data carries no information for the requested quantity.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Vector length does not match the declared number of covariate dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The outer likelihood maximization stopped before reaching the gradient
    /// tolerance. Carries the best estimate found so far for diagnostics.
    #[error(
        "estimation did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:.3e}, log-likelihood {log_likelihood:.6})"
    )]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
        log_likelihood: f64,
        best: Box<ThetaEstimate>,
    },

    /// Experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

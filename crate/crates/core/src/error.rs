//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: bad node ids, probabilities outside `[0, 1]`,
    /// inconsistent plant specs, invalid configuration fields and the like.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two graphs or partitions that must share a node-id space do not.
    #[error("node spaces differ: {0}")]
    NodeSpaceMismatch(String),

    /// Random model generation failed (e.g. positive-definite repair could
    /// not preserve the support pattern); the caller may reseed and retry.
    #[error("generation failed: {0}")]
    Generation(String),

    /// The joint solver hit its iteration cap before the residuals dropped
    /// below tolerance.
    #[error(
        "solver did not converge within {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    /// The empirical covariance is too degenerate for the requested fit.
    #[error("degenerate empirical covariance: {0}; try a larger lambda_sparse")]
    DegenerateCovariance(String),

    /// Text or JSON input that could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD did not converge within {0} iterations")]
    SvdNoConvergence(usize),

    #[error("solver did not converge after {iterations} iterations ({detail})")]
    NoConvergence { iterations: usize, detail: String },

    #[error("objective diverged at iteration {0}")]
    Diverged(usize),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error(
        "reduction stalled with {support} columns above the bound {bound} (smallest singular value {sigma_min:e})"
    )]
    ReductionStalled {
        support: usize,
        bound: usize,
        sigma_min: f64,
    },

    #[error("bound violation: {0}")]
    BoundViolation(String),

    #[error("combinatorial guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("corrupt container: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

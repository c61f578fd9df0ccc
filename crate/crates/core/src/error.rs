use thiserror::Error;

/// Errors raised by problem construction, oracle evaluation and solver configuration.
///
/// `Converged` and `Stationary` are not failures in the usual sense: feedback
/// evaluation refuses to divide by a vanishing denominator and reports the
/// terminal condition instead.
#[derive(Debug, Error)]
pub enum OsgmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("optimal value f* is required but unknown for this problem")]
    MissingOptimalValue,

    #[error("optimal point x* is required but unknown for this problem")]
    MissingOptimalPoint,

    #[error("{0}")]
    Undefined(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("objective not L-smooth at probe")]
    NotSmooth,

    #[error("converged: optimality gap {gap:e} below tolerance")]
    Converged { gap: f64 },

    #[error("stationary: gradient norm {grad_norm:e} below tolerance")]
    Stationary { grad_norm: f64 },

    #[error("gap underflow: potential not evaluable past convergence")]
    GapUnderflow,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OsgmError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(OsgmError::DimensionMismatch { expected, found })
    }
}

use thiserror::Error;

/// Errors raised by the library. `log_partition_at` is the one place where
/// leaving a domain is not an error (it returns `+inf` instead).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point outside {what}: {detail}")]
    Domain { what: String, detail: String },

    #[error("point on or outside the canonical domain boundary (coordinate {coordinate:?})")]
    Boundary { coordinate: Option<usize> },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("support point {point:?} is not certified as a simple e-variable")]
    Uncertified { point: Vec<f64> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("misuse: {0}")]
    Misuse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(label: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{label} = {xs:?}")))
    }
}

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

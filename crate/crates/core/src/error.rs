use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("near-singular resolvent symbol: {0}")]
    NearSingular(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("envelope violation: {0}")]
    Envelope(String),
    #[error("step failure: {0}")]
    StepFailure(String),
    #[error("insufficient samples: {0}")]
    Advisory(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !($cond) {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;

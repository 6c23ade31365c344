use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("moment unavailable: {0}")]
    MomentUnavailable(String),
    #[error("density unavailable: {0}")]
    DensityUnavailable(String),
    #[error("singular evaluation: {0}")]
    Singular(String),
    #[error("evaluation outside effective support: {0}")]
    Evaluation(String),
    #[error("sampling failure: {0}")]
    Sampling(String),
    #[error("numerical guard: {0}")]
    NumericalGuard(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

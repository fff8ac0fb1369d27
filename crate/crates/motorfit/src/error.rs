//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed matrices, improper transfer functions and the like.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A caller-supplied argument violates an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Text that could not be parsed (CSV rows, TF literals, documents).
    #[error("parse error: {0}")]
    Parse(String),

    /// Timestamps deviate from a uniform grid by more than the tolerance.
    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    /// A trace is too short for the requested operation.
    #[error("trace too short: {0}")]
    TraceTooShort(String),

    /// Step-onset detection failed.
    #[error("synchronize: {0}")]
    Synchronize(String),

    /// An identification stage failed on otherwise well-formed data.
    #[error("identification: {0}")]
    Identification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than by the
    /// identification mathematics. CLI front ends map these to exit code 2
    /// and the rest to exit code 3.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Identification(_))
    }
}

//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation before any computation started.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A value left the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The assembled linear system is (numerically) singular.  For these
    /// systems this signals that the space of forms with the prescribed
    /// principal part is not one-dimensional.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// An iteration failed to converge at the working precision.
    #[error("precision fault: {0}")]
    PrecisionFault(String),

    /// A required table entry or data record is missing.
    #[error("missing data: {0}")]
    MissingData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    /// A covariance (or Hessian) matrix could not be factorized.
    #[error("numerical conditioning error in {what}: {detail}")]
    Conditioning { what: String, detail: String },

    /// Dataset or design shape does not match what the operation expects.
    #[error("schema error: {0}")]
    Schema(String),

    /// The operation does not support the requested problem size.
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    /// An iterative or quadrature routine failed to produce a finite answer.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn conditioning(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Conditioning {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

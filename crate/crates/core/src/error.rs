use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested computation is not available for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numerical failure inside the sampler or an estimator.
    #[error("numerical failure at sweep {sweep}: {message}")]
    Numerical { sweep: usize, message: String },

    /// Posterior identification could not produce a unique labelling.
    #[error("identification failed for khat={khat}: {message}")]
    Identification { khat: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Error categories, mapped to process exit codes by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad config fields, shape mismatches, negative rates.
    #[error("validation error: {0}")]
    Invalid(String),

    /// A mathematical hypothesis of the requested operation does not hold
    /// (reducible graph, nonzero drift, asymmetric rates, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A numerical guard tripped: branch crossing, enumeration cap,
    /// wrap-around past the safe horizon.
    #[error("numerical guard: {0}")]
    Guard(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("linear algebra error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code contract: 2 validation, 3 precondition, 4 numerical guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Json(_) => 2,
            Error::Precondition(_) => 3,
            Error::Guard(_) => 4,
            Error::Io(_) | Error::Linalg(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

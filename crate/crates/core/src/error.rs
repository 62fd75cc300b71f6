use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument had the wrong shape or was outside its domain.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// An API was used in a way its contract forbids (reused tape, stepping a finished episode, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration field is missing, malformed or inconsistent.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// A computation produced or was fed a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}

/// Fails with [`Error::InvalidInput`] unless `a == b`.
pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::InvalidInput(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

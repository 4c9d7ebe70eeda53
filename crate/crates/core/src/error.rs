use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch, out-of-range parameter, or non-finite input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A dense object would exceed the configured element cap, or a count overflowed.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Input parsed but holds values the library refuses (NaN, Inf, bad weights).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("all {runs} runs failed: {reasons}")]
    AllRunsFailed { runs: usize, reasons: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

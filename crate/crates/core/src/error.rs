use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The design or config JSON does not match its schema.
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    /// Well-formed input that violates a document invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An operation was called with inputs outside its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Shape or protocol mismatch between pipeline stages and the backend.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    /// Metric evaluated on inputs where it is not defined (zero vector in cosine).
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("element `{element}`: {message}")]
    Element { element: String, message: String },

    #[error("asset {path}: {message}")]
    Asset { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit status for the CLI: 1 for bad input, 2 for backend or
    /// contract failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            _ => 1,
        }
    }
}

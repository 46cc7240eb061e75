use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty group: no records match {0}")]
    EmptyGroup(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the CLI: 1 validation, 2 I/O or format, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Config(_)
            | Error::Shape(_)
            | Error::EmptyGroup(_) => 1,
            Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Numeric(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

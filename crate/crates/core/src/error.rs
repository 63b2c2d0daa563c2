use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input record. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ingestion: {0}")]
    Ingestion(String),

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("report: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable, machine-parsable category used on the CLI's error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Ingestion(_) => "ingestion",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Schema(_) => "schema",
            Error::Backend(_) => "backend",
            Error::Report(_) => "report",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("execution error: {0}")]
    Exec(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} already exists")]
    TableExists(String),
    #[error("version {version} of table {table} not found")]
    VersionNotFound { table: String, version: u64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("commit conflict on table {table} at version {version}: {reason}")]
    Conflict {
        table: String,
        version: u64,
        reason: String,
    },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt metadata in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl EngineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn is_conflict(&self) -> bool {
        matches!(self, Self::Conflict { .. })
    }
}

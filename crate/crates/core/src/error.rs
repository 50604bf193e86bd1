use std::path::{Path, PathBuf};

use lsth_engine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("task not found: {0}")]
    TaskNotFound(String),
    #[error("task {0} has no statements")]
    EmptyTask(String),
    #[error("missing variable: {0}")]
    MissingVariable(String),
    #[error("generator not found: {0}")]
    GeneratorNotFound(String),
    #[error("generator {name} failed: {message}")]
    Generator { name: String, message: String },
    #[error("target unreachable: {target}: {message}")]
    TargetUnreachable { target: String, message: String },
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path} line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("insufficient data: series of length {0}")]
    InsufficientData(usize),
    #[error("division by zero at iteration {0}")]
    DivisionByZero(usize),
    #[error("unknown phase: {0}")]
    UnknownPhase(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Errors caused by the user's input rather than by running it.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Syntax(_)
                | HarnessError::Validation(_)
                | HarnessError::Config(_)
                | HarnessError::TaskNotFound(_)
                | HarnessError::EmptyTask(_)
                | HarnessError::GeneratorNotFound(_)
        )
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

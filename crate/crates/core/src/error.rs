use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("table `{table}`: {message}")]
    Invariant { table: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    EmptyInput(String),

    #[error("table `{table}` has {columns} columns but the serializer fits at most {max_columns}")]
    TooManyColumns {
        table: String,
        columns: usize,
        max_columns: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invariant(table: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            table: table.into(),
            message: message.into(),
        }
    }

    /// Coarse category used by command-line front ends to choose an exit code.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Toml(_) | Error::TooManyColumns { .. }
        )
    }
}

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario is missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] matstruct_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::MissingKeys(_) => "missing_keys",
            CliError::Invalid(_) => "invalid_scenario",
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Json(_) => "serialization",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            status: "error",
            kind: self.kind(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable failure written next to the outputs.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
}

use std::path::PathBuf;

use thiserror::Error;

use crate::problem::Problem;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariant. `key` names the offending
    /// configuration key so callers can report it verbatim.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at step {step} on {problem}: {detail}")]
    Training {
        step: u64,
        problem: Problem,
        detail: String,
    },

    #[error("checkpoint schema version {found} does not match supported version {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

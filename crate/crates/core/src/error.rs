use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, JumpsError>;

#[derive(Debug, Error)]
pub enum JumpsError {
    /// A numeric argument is outside the domain of the formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration, plan or document failed validation.
    #[error("invalid input: {0}")]
    Validation(String),

    /// No connected topology was drawn within the retry budget.
    #[error("no connected topology after {attempts} draws (density too low for full connectivity)")]
    ConnectivityExhausted { attempts: u32 },

    /// A node could not be reached from a source on a topology assumed connected.
    #[error("node {node} unreachable from {source_node}")]
    Unreachable { source_node: usize, node: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl JumpsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JumpsError::Io {
            path: path.into(),
            source,
        }
    }
}

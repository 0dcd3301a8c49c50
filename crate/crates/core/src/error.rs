use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CapireError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CapireError {
    /// The input file could not be read or is structurally garbled.
    #[error("ingestion error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("dataset failed validation with {violations} hard violation(s)")]
    ValidationFailed { violations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing upstream artifact {artifact}; run `{stage}` first")]
    MissingArtifact {
        artifact: PathBuf,
        stage: &'static str,
    },

    #[error("refusing to overwrite existing {0} (pass --force)")]
    OutputExists(PathBuf),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("feature `{0}` declares no time bound")]
    UndeclaredTimeBound(String),

    #[error("leakage probe: {0} matrix cell(s) changed under post-window perturbation")]
    LeakageDetected(usize),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CapireError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CapireError::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CapireError::InvalidInput(msg.into())
    }
}

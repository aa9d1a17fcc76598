use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EraError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("policy failed: {0}")]
    Policy(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("singular normal matrix in least-squares fit (ridge = {0})")]
    Singular(f64),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("duplicate bank entry id {0}")]
    DuplicateId(u64),

    #[error("unknown bank entry id {0}")]
    UnknownId(u64),

    #[error("invalid bank entry {id}: {reason}")]
    InvalidEntry { id: u64, reason: String },

    #[error("knowledge bank is empty")]
    EmptyBank,

    #[error("ANN index is stale ({inserted} inserts since build over {trained_on} entries); rebuild required")]
    StaleIndex { inserted: usize, trained_on: usize },

    #[error("no ANN index has been built")]
    NoIndex,

    #[error("invalid reliability {0}: must lie in (0, 1]")]
    Reliability(f64),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("event list is empty; a decision needs at least one element")]
    EmptyEvent,

    #[error("missing {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: &'static str },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EraError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> EraError {
    let path = path.into();
    move |source| EraError::Io { path, source }
}

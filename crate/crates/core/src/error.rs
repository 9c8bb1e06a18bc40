use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while reading a dataset directory. Each corruption mode has its
/// own variant so callers (and the CLI exit codes) can tell them apart.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: expected {expected} bytes, found {actual}")]
    ByteCount {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("label {label} at (row {row}, col {col}) exceeds class count {classes}")]
    LabelOutOfRange {
        label: u16,
        classes: usize,
        row: usize,
        col: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset has no labeled pixels")]
    EmptyDataset,
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("layer {layer} cannot be built: {reason}")]
    Build { layer: String, reason: String },
    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset already augmented with reciprocal relations")]
    AlreadyAugmented,

    #[error("invalid split boundaries: t_valid ({t_valid}) must be < t_test ({t_test})")]
    InvalidSplit { t_valid: i64, t_test: i64 },

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("unknown predicate id {0}")]
    UnknownPredicate(u32),

    #[error("unknown name `{name}` in {vocab} vocabulary")]
    UnknownName { vocab: &'static str, name: String },

    #[error("segment id {id} at position {index} is out of range for {segments} segments")]
    SegmentOutOfRange {
        index: usize,
        id: usize,
        segments: usize,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty record set")]
    EmptyRecords,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::params::ParameterSet>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

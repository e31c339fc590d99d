//! Error type shared by every module in the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, UqError>;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),

    #[error("length mismatch: {what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("rank mismatch: expected rank {expected}, file has rank {found}")]
    RankMismatch { expected: u8, found: u8 },

    #[error("truncated payload: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("dimension overflow: {0:?}")]
    DimOverflow(Vec<u64>),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("internal consistency: {0}")]
    Consistency(String),
}

impl UqError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UqError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for usage, IO and file-format problems, 1 for
    /// everything that fails during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            UqError::InvalidArgument(_)
            | UqError::BadMagic { .. }
            | UqError::UnsupportedVersion(_)
            | UqError::RankMismatch { .. }
            | UqError::Truncated { .. }
            | UqError::TrailingBytes(_)
            | UqError::DimOverflow(_)
            | UqError::Parse { .. }
            | UqError::Io { .. }
            | UqError::Json(_) => 2,
            _ => 1,
        }
    }
}

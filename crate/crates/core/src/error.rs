use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at {location}")]
    NonFiniteValue { location: String },

    #[error("embedding set for case {0:?} has no slices")]
    EmptySet(String),

    #[error("invalid case id: {0}")]
    InvalidCaseId(String),

    #[error("duplicate case id {0:?}")]
    DuplicateCaseId(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("transform produced a degenerate volume: {0}")]
    DegenerateOutput(String),

    #[error("invalid transform parameter: {0}")]
    InvalidTransform(String),

    #[error("jpeg codec error: {0}")]
    Codec(String),

    #[error("index database is empty")]
    EmptyDatabase,

    #[error("invalid index parameters: {0}")]
    InvalidParams(String),

    #[error("scored set {0:?} needs at least one positive and one negative item")]
    DegenerateSet(String),

    #[error("query {0:?} is labelled positive but carries no ground truth")]
    MissingGroundTruth(String),

    #[error("task {0:?} has no cases")]
    EmptyTask(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user configuration rather than input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParams(_) | Error::InvalidTransform(_)
        )
    }
}

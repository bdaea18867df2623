use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("panorama is {width} columns wide; at least {min} are required")]
    ImageTooNarrow { width: usize, min: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("not a feature database (bad magic)")]
    MagicMismatch,

    #[error("unsupported database format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("database file is truncated")]
    Truncated,

    #[error("invalid database: {0}")]
    InvalidDatabase(String),

    #[error("{what} {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: i64,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("no candidates to aggregate")]
    NoCandidates,

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
}

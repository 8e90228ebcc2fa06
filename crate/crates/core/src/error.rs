use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, bad range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Segmentation found no skin pixels to build a hand region from.
    #[error("no hand region")]
    NoHandRegion,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("xml error in <{element}>: {message}")]
    Xml { element: String, message: String },

    #[error("ingestion error in {}: {message}", dir.display())]
    Ingest { dir: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: image decode failed: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("not a checkpoint")]
    NotACheckpoint,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u16, expected: u16 },

    #[error("checkpoint truncated")]
    CheckpointTruncated,

    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;

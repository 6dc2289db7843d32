use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detector, from decoding inputs to evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed bytes; `offset` is the byte position where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A payload shorter (or longer) than its header declares.
    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("stream too short: {frames} frames, a window needs {needed}")]
    StreamTooShort { frames: usize, needed: usize },

    /// Training needs both classes present.
    #[error("degenerate batch: {normal} normal and {abnormal} abnormal examples")]
    DegenerateBatch { normal: usize, abnormal: usize },

    #[error("AUC undefined: labels contain a single class")]
    UndefinedAuc,

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Configuration(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

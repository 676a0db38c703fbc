use std::io;
use std::path::PathBuf;

use neuropath_core::Error as CoreError;

/// Errors raised by file formats, loaders and the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    /// A tensor file does not hold the number of bytes its layer needs.
    #[error("corrupt model: tensor {tensor} has {actual} bytes, expected {expected}")]
    CorruptModel {
        tensor: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{}: unsupported format_version {version} (supported: {supported})", path.display())]
    UnsupportedVersion {
        path: PathBuf,
        version: u64,
        supported: u64,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for usage errors, 2 for data or model errors and
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Core(CoreError::Usage(_)) => 1,
            Error::Core(CoreError::Numeric { .. }) | Error::Core(CoreError::Degenerate(_)) => 3,
            _ => 2,
        }
    }
}

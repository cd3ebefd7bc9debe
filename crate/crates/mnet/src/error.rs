use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: payload has {actual} bytes, sidecar declares {expected}")]
    PayloadLength { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: unknown dtype {dtype:?}")]
    UnknownDtype { path: PathBuf, dtype: String },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] mnet_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Error {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// 0 success, 1 usage/config/IO, 2 verification failure, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) => 2,
            Error::Core(mnet_core::Error::Divergence { .. }) => 3,
            _ => 1,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data of the wrong shape.
    #[error("input error: {0}")]
    Input(String),
    /// Value outside the mathematical domain of an operation (zero vector, bad symbol).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("training error: {0}")]
    Training(String),
    /// Invalid or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error at {file}:{row}: {message}")]
    Ingestion {
        file: String,
        row: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Ingestion,
    Format,
    Other,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Domain(_) | Error::Training(_) => {
                ErrorKind::Config
            }
            Error::Ingestion { .. } => ErrorKind::Ingestion,
            Error::Format(_) => ErrorKind::Format,
            Error::Internal(_) | Error::Io(_) => ErrorKind::Other,
        }
    }
}

pub(crate) fn config<S: Into<String>>(msg: S) -> Error {
    Error::Config(msg.into())
}

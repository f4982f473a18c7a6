use std::path::PathBuf;

/// Errors raised by the library.
///
/// Variants group into the three exit-code classes the CLI reports:
/// input problems, consistency violations and runtime failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit-code classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Consistency,
    Runtime,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::Json(_) => ErrorClass::Input,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorClass::Input
            }
            Error::Consistency(_) | Error::DimensionMismatch(_) | Error::IndexOutOfRange(_) => {
                ErrorClass::Consistency
            }
            Error::Io { .. } | Error::Runtime(_) => ErrorClass::Runtime,
        }
    }

    /// Exit code: 2 input/parse, 3 consistency, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Input => 2,
            ErrorClass::Consistency => 3,
            ErrorClass::Runtime => 4,
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed row or cell; `line` is 1-based and counts the header.
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    /// A well-formed file whose content violates a rule (gaps, no rows).
    #[error("{file}: {message}")]
    Data { file: String, message: String },
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("artifacts {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] pansim_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn data(file: &str, message: impl Into<String>) -> Self {
        Error::Data {
            file: file.to_string(),
            message: message.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SalstatsError {
    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] salcap::Error),
}

pub type Result<T> = std::result::Result<T, SalstatsError>;

impl SalstatsError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SalstatsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        SalstatsError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] partseg_core::Error),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: partseg_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("non-finite {0}")]
    NonFinite(String),
}

impl CliError {
    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(partseg_core::Error) -> CliError {
        let path = path.into();
        move |source| CliError::File { path, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 1 usage, 2 data or format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NonFinite(_) => 3,
            CliError::Core(e) | CliError::File { source: e, .. } if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

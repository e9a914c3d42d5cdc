use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },

    #[error("{what} not found at {}; run `xmr {producer}` first", path.display())]
    MissingArtifact { what: &'static str, path: PathBuf, producer: &'static str },

    #[error("{what} not found at {}", path.display())]
    MissingInput { what: &'static str, path: PathBuf },

    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] xmr_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), line, message: message.into() }
    }
}

use std::path::{Path, PathBuf};

/// Errors surfaced by file formats and commands.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// Binary layout problem at a byte offset.
    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: u64, message: String },

    /// Malformed or invalid structured-text document.
    #[error("{}: {message}", path.display())]
    Document { path: PathBuf, message: String },

    /// Checkpoint does not fit the requested configuration.
    #[error("{}: incompatible checkpoint: {message}", path.display())]
    Incompatible { path: PathBuf, message: String },

    /// Bad command-line or configuration input.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] adnet_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), offset, message: message.into() }
    }

    pub(crate) fn document(path: &Path, message: impl std::fmt::Display) -> Self {
        Error::Document { path: path.to_path_buf(), message: message.to_string() }
    }

    /// 1 usage, 2 data or format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Core(adnet_core::Error::Config(_)) => 1,
            Error::Core(adnet_core::Error::Numeric(_)) => 3,
            _ => 2,
        }
    }
}

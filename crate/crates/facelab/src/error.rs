use std::io;
use std::path::PathBuf;

/// Everything that can go wrong outside the numerical core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] facelab_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: facelab_core::Error },
    #[error("model archive: {0}")]
    Archive(String),
    #[error("policy file line {line}: {message}")]
    Policy { line: usize, message: String },
    #[error("report: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

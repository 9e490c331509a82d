use std::path::{Path, PathBuf};

use ccfc_core::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("corrupt checkpoint {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
    #[error("incompatible checkpoint {}: {reason}", path.display())]
    Incompatible { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ccfc_core::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl Error {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Error {
        Error::Format {
            path: path.to_owned(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 bad input, 3 incompatible checkpoint,
    /// 4 numerical divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Incompatible { .. } => 3,
            Error::Train(TrainError::Diverged(_)) | Error::Core(ccfc_core::Error::NonFinite(_)) => {
                4
            }
            Error::Train(TrainError::Invalid(ccfc_core::Error::NonFinite(_))) => 4,
            _ => 2,
        }
    }
}

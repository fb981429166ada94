use std::path::PathBuf;

use barycentric_rom::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed matrix file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: hash mismatch (manifest {expected}, file {actual})")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Numerical(CoreError),
}

impl CliError {
    /// 0 success, 2 config error, 3 numerical failure, 4 missing data.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(e) => match e {
                CoreError::InvalidInput(_)
                | CoreError::DuplicateNodes
                | CoreError::IndexOutOfRange { .. } => 2,
                CoreError::ShapeMismatch(_) => 4,
                _ => 3,
            },
            CliError::MissingData(_)
            | CliError::Format { .. }
            | CliError::HashMismatch { .. } => 4,
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Numerical(e)
    }
}

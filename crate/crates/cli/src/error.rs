use std::path::{Path, PathBuf};
use thiserror::Error;

/// Process exit status for each failure class.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: malformed files, inconsistent datasets, invalid options.
    #[error("{0}")]
    Validation(String),
    /// A numerical stage failed (ICP, undefined precision).
    #[error("{0}")]
    Numerical(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Malformed content in a named file.
    pub fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{}: {msg}", path.display()))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

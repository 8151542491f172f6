use std::path::Path;
use std::process::ExitCode;

use ibi_core::Error as CoreError;

/// Failure of one command, classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
            CliError::Internal(_) => ExitCode::from(4),
        }
    }

    /// Attaches the offending path to an I/O or parse failure.
    pub fn at(path: &Path) -> impl FnOnce(CoreError) -> CliError + '_ {
        move |e| match e {
            CoreError::Io(m) | CoreError::Parse(m) => CliError::Io(format!("{}: {m}", path.display())),
            other => CliError::from(other),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::Parse(_) => CliError::Io(e.to_string()),
            CoreError::InvalidInput(_) | CoreError::MissingScores(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

use std::fmt;
use std::process::ExitCode;

use qtpe_core::QtpeError;

/// Why a command stopped, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// A hard check in a report did not hold.
    Check(String),
    /// Bad arguments, bad configuration or a violated precondition.
    Usage(String),
    /// An iterative solver stopped before reaching its tolerance.
    NoConvergence(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Check(_) => 1,
            Self::Usage(_) => 2,
            Self::NoConvergence(_) => 3,
            Self::Io(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Check(m) => write!(f, "check failed: {m}"),
            Self::Usage(m) => write!(f, "{m}"),
            Self::NoConvergence(m) => write!(f, "not converged: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<QtpeError> for Failure {
    fn from(e: QtpeError) -> Self {
        match e {
            QtpeError::Io(_) => Self::Io(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

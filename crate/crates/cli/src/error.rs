use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_PROPERTY: u8 = 5;

/// A failed command, classified by the exit status it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or flag combinations.
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable or malformed input, or an output that could not be written.
    #[error("data: {0}")]
    Data(String),
    /// A solver failed, or a replay did not reproduce its trace.
    #[error("numerical: {0}")]
    Numerical(String),
    /// At least one property suite exceeded its gate.
    #[error("property check failed: {0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Property(_) => EXIT_PROPERTY,
        }
    }

    pub(crate) fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn numerical(e: impl std::fmt::Display) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

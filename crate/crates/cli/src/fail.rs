use std::fmt;

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Resource(String),
    Verification(String),
    Io(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Resource(m) | CliError::Verification(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ctecs::Error> for CliError {
    fn from(e: ctecs::Error) -> Self {
        if e.is_resource() {
            CliError::Resource(e.to_string())
        } else if matches!(e, ctecs::Error::SelfCheck(_)) {
            CliError::Verification(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

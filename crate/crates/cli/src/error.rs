use thiserror::Error;

/// Command failure with its process exit code: 2 for bad usage or input,
/// 1 for failures while computing.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<ghplom::Error> for CliError {
    fn from(e: ghplom::Error) -> Self {
        use ghplom::Error as E;
        let usage = match e.root() {
            E::InvalidParameter(_)
            | E::DegenerateFeature { .. }
            | E::DimensionMismatch { .. }
            | E::Parse { .. }
            | E::VersionMismatch { .. } => true,
            E::Io(io) => io.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        };
        if usage {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

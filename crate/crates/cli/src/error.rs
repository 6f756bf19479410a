use std::process::ExitCode;

use nvepr::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::NoConvergence(_) => 3,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::InvalidTrace(_)
            | Error::InvalidGrid(_)
            | Error::DegenerateReference { .. } => CliError::Data(e.to_string()),
            Error::NoConvergence(m) => CliError::NoConvergence(m),
            Error::Domain(_) | Error::KindMismatch { .. } | Error::TooManySpins { .. } | Error::InvalidProblem(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

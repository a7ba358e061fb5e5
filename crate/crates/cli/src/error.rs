use kfp_core::KfpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] KfpError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot read config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{failed} verification check(s) failed")]
    VerifyFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) => 2,
            CliError::VerifyFailed { .. } => 3,
            CliError::Usage(_) => 64,
            CliError::Config { .. } => 66,
            CliError::Io(_) => 74,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

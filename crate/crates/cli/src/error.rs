use std::process::ExitCode;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Missing or malformed input data, or a failed computation (exit 2).
    #[error(transparent)]
    Data(#[from] anyhow::Error),
    /// An upstream stage's outputs are missing or out of date (exit 3).
    #[error("stage `{stage}` is stale: {reason}; rerun `trigwarn {stage}`")]
    Stale { stage: String, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Stale { .. } => 3,
        })
    }

    pub fn stale(stage: &str, reason: impl Into<String>) -> Self {
        CliError::Stale {
            stage: stage.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<trigwarn_core::Error> for CliError {
    fn from(e: trigwarn_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<trigwarn_transformer::Error> for CliError {
    fn from(e: trigwarn_transformer::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

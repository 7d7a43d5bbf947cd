use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] trigwarn_core::Error),
    #[error("tensor backend: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("no pretrained weights at {0} (expected config.json, model.safetensors and tokenizer.json)")]
    MissingPretrained(PathBuf),
    #[error("{path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("labels are required for training; `{0}` has none")]
    Unlabeled(String),
    #[error("nothing to train on")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn checkpoint(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Checkpoint {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl From<Error> for trigwarn_core::Error {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(inner) => inner,
            other => trigwarn_core::Error::Encoder(other.to_string()),
        }
    }
}

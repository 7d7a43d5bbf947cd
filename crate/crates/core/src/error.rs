use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("document `{0}` has no labels")]
    MissingLabels(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("embedding store {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class `{0}` has no positive examples in the training split")]
    NoPositives(String),

    #[error("labels are not aligned with embeddings: {0}")]
    Misaligned(String),

    #[error("length mismatch: {0} predictions vs {1} ground-truth rows")]
    LengthMismatch(usize, usize),

    #[error("empty input")]
    EmptyInput,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("encoder: {0}")]
    Encoder(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

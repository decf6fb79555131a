use std::path::PathBuf;

/// Errors surfaced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("character {ch:?} is not in the vocabulary ({context})")]
    OutOfVocab { ch: char, context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("instance too large for exhaustive enumeration: {paths} paths exceeds limit {limit}")]
    InstanceTooLarge { paths: f64, limit: f64 },

    #[error("utterance {id:?} has no reference transcription")]
    MissingReference { id: String },

    #[error("normal equations are singular; refit with a ridge coefficient > 0")]
    SingularNormalEquations,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("lexicon {path:?}: {detail}")]
    Lexicon { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

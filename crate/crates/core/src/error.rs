use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// The variants group into three families that the command line maps onto
/// exit codes: configuration, data/validation and backend failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("unknown emotion label `{0}`")]
    UnknownEmotion(String),

    #[error("empty lexicon")]
    EmptyLexicon,

    #[error("invalid emotion set: {0}")]
    InvalidEmotionSet(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("record `{0}` has no label")]
    Unlabeled(String),

    #[error("no matching arguments")]
    NoMatchingArguments,

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Backend(_) => ErrorKind::Backend,
            _ => ErrorKind::Data,
        }
    }
}

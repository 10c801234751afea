use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trial spec: {0}")]
    InvalidSpec(String),

    #[error("ground truth does not match spec: {0}")]
    InvalidTruth(String),

    #[error("invalid computation {computation}: {reason}")]
    InvalidComputation { computation: String, reason: String },

    #[error("not a root-to-leaf path: {0:?}")]
    InvalidPath(Vec<usize>),

    #[error("beliefs are not a one-click transition: {0}")]
    NotSuccessor(String),

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("corrupt record {participant} (trial {trial}, step {step}): {reason}")]
    CorruptRecord {
        participant: String,
        trial: usize,
        step: usize,
        reason: String,
    },

    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid_computation(c: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        Error::InvalidComputation {
            computation: c.to_string(),
            reason: reason.into(),
        }
    }
}

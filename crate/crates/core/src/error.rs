use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReuseError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },

    #[error("failed to parse config document: {0}")]
    Document(String),

    #[error("corrupt trace at line {line}: {message}")]
    CorruptTrace { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ReuseError>;

pub(crate) fn config_err(msg: impl Into<String>) -> ReuseError {
    ReuseError::Config(msg.into())
}

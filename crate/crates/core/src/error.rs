use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid token library: {0}")]
    Library(String),

    #[error("malformed expression tree: {0}")]
    Structure(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("every token is masked at node {node} (depth {depth})")]
    MaskedToEmpty { node: usize, depth: u32 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("target has zero variance")]
    DegenerateTarget,

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite gradient from {0}")]
    NonFiniteGradient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

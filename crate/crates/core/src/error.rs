use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("graph has {n} vertices, exact enumeration supports at most {max}")]
    TooLarge { n: usize, max: usize },

    #[error("input graph is not a tree")]
    NotATree,

    #[error("node cap of {cap} exceeded while sampling a Polya point tree")]
    NodeCapExceeded { cap: usize },

    #[error("run did not finish within its time budget")]
    DeadlineExceeded,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

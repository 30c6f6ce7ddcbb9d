use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence of {len} tokens exceeds the limit of {limit} positions")]
    Length { len: usize, limit: usize },

    #[error("invalid mask position {position}: {reason}")]
    InvalidMask {
        position: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    Bounds {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("empty selection: {0}")]
    EmptySelection(&'static str),

    #[error("no candidate column: every position is a special token")]
    NoCandidate,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("weights error: {0}")]
    Weights(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("index build error: {0}")]
    Build(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("degenerate query: the query vector has zero norm")]
    DegenerateQuery,

    #[error("incompatible index: built for model {expected}, supplied model is {found}")]
    Incompatible { expected: String, found: String },

    #[error("integrity error in {path}: {message}")]
    Integrity { path: PathBuf, message: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

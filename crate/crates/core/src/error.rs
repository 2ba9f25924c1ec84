use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand extents are incompatible.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A dataset, conversation or utterance violates a data invariant.
    #[error("invalid data: {0}")]
    Data(String),

    /// Missing-rate protocol violation.
    #[error("missing-rate protocol: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph: {0}")]
    Graph(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Protocol(_) | Error::Graph(_) => 3,
            Error::Shape { .. } | Error::Tensor(_) | Error::Numeric(_) => 4,
            Error::Io { .. } | Error::Json(_) => 5,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("token budget exceeded: {0}")]
    Budget(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema { .. } => "schema",
            Error::Invariant(_) => "invariant",
            Error::Config(_) => "config",
            Error::Budget(_) => "budget",
            Error::Shape(_) => "shape",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

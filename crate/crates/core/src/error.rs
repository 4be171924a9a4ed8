use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("instance {id}: {message}")]
    InvalidInstance { id: String, message: String },

    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("instance {id}: dependency path is empty")]
    DegeneratePath { id: String },

    #[error("block {block}: {message}")]
    Block { block: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Shape(String),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by invalid configuration or input records.
    /// The CLI maps these to exit code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::InvalidInstance { .. }
            | Error::DimensionMismatch { .. }
            | Error::DegeneratePath { .. }
            | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Io { .. } | Error::Block { .. } | Error::Shape(_) | Error::Container(_) => false,
        }
    }
}

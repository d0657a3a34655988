use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid NIfTI header field `{field}`: {reason}")]
    NiftiHeader { field: &'static str, reason: String },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("invalid FTV container: {0}")]
    Ftv(String),

    #[error("landmark file {path}, line {line}: {reason}")]
    LandmarkParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("landmark files have unequal lengths ({fixed} fixed vs {moving} moving)")]
    LandmarkCount { fixed: usize, moving: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

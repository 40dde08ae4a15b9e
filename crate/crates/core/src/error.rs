use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the decoding stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("length mismatch in {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown channel name `{0}`")]
    UnknownChannel(String),

    #[error("invalid marker value {value} at sample {index}")]
    InvalidMarker { index: usize, value: u8 },

    #[error("invalid label {0}; labels must be 0, 1 or 2")]
    InvalidLabel(usize),

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has {count} samples, need at least {needed}")]
    InsufficientClass {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("bad magic bytes in model file")]
    BadMagic,

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated model file: {0}")]
    Truncated(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cross-validation fold {fold} failed: {source}")]
    Fold {
        fold: usize,
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

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// True for errors caused by bad input data rather than numerics.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Numeric(_) => false,
            Error::Fold { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

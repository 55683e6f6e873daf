//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by parsing, graph construction, training and evaluation.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate function name `{0}`")]
    DuplicateFunction(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("LSH banding mismatch: {bands} bands x {rows} rows != {num_hashes} hashes")]
    BandingMismatch {
        bands: usize,
        rows: usize,
        num_hashes: usize,
    },

    #[error("graph with {vertices} vertices does not fit padded size {size}")]
    Capacity { vertices: usize, size: usize },

    #[error("tensor shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("label {0} outside the known-class set")]
    UnknownLabel(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("unsupported model format version {found} (this build reads <= {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

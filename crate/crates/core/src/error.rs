use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("document is empty")]
    EmptyDocument,

    #[error("token id {id} outside vocabulary of size {vocab}")]
    Vocabulary { id: usize, vocab: usize },

    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },

    #[error("no valid negative available for {0}")]
    NoNegativeAvailable(String),

    #[error("no valid positive available for {0}")]
    NoPositiveAvailable(String),

    #[error("triplet mining exhausted: {0}")]
    MiningExhausted(String),

    #[error("category {0:?} cannot be mapped onto the taxonomy")]
    UnmappableCategory(String),

    #[error("checkpoint corrupted: {0}")]
    Corruption(String),

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Dimension { .. } | Error::Numeric(_) | Error::Contract(_) => {
                ErrorKind::Numeric
            }
            Error::Io { .. } => ErrorKind::Io,
            Error::Index { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::EmptyDocument
            | Error::Vocabulary { .. }
            | Error::Length { .. }
            | Error::NoNegativeAvailable(_)
            | Error::NoPositiveAvailable(_)
            | Error::MiningExhausted(_)
            | Error::UnmappableCategory(_)
            | Error::Corruption(_)
            | Error::UnsupportedVersion { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

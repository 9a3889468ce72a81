use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("phrase has no occurrences in the corpus")]
    NoOccurrences,

    #[error("document has no entity occurrences")]
    NoEntities,

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt array `{name}`: expected {expected} values, found {found}")]
    CorruptArray {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

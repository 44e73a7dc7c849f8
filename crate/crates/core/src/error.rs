use std::io;

use crate::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown token `{0}` and the vocabulary has no unknown id")]
    UnknownToken(String),

    #[error("token id {id} is out of vocabulary (size {size})")]
    OutOfVocabulary { id: TokenId, size: usize },

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input of length {len} exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("input is empty")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("vocabulary hash mismatch: file {file:#018x}, active {active:#018x}")]
    VocabMismatch { file: u64, active: u64 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("all drafts are finished")]
    AllFinished,

    #[error("only {available} candidate tokens available, {needed} needed")]
    InsufficientSupport { available: usize, needed: usize },

    #[error("draft index {index} out of range ({len} drafts)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("n-gram interpolation enabled but no ensemble supplied")]
    MissingNgram,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

//! Multi-draft text completion with superposed decoding.

pub mod decode;
pub mod dist;
pub mod error;
pub mod eval;
pub mod lm;
pub mod ngram;
pub mod probe;
pub mod vocab;

pub use dist::Distribution;
pub use error::{Error, Result};

/// Token id; dense in `[0, vocab size)`.
pub type TokenId = u32;

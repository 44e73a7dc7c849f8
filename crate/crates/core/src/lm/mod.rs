//! Language models that consume embeddings rather than token ids.
//!
//! Superposition feeds weighted sums of token embeddings into the model, so the
//! [`LanguageModel`] interface takes an embedding sequence and returns the logits
//! for the next position. Two backends ship with the crate:
//!
//! * [`LinearMockLM`], an exactly linear recurrent model used as an oracle;
//! * [`TinyTransformerLM`], a small pre-norm decoder-only transformer.

mod checkpoint;
mod mock;
pub mod tensor;
mod transformer;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::TokenId;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mock::{LinearMockLM, MockConfig, MockEmbedding};
pub use transformer::{TinyTransformerLM, TransformerConfig};

/// Token representation fed to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("embedding has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Pre-softmax scores over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Counts forward passes. Shared across threads that use the same model.
#[derive(Debug, Default)]
pub struct ForwardCounter(AtomicU64);

impl ForwardCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

pub trait LanguageModel: Send + Sync {
    fn name(&self) -> &str;

    /// Embedding dimension.
    fn dim(&self) -> usize;

    fn vocab_size(&self) -> usize;

    /// Maximum input length, if bounded.
    fn context_len(&self) -> Option<usize> {
        None
    }

    fn embed(&self, id: TokenId) -> Result<Embedding>;

    /// Logits for the position after the last input. Each call counts as one
    /// forward pass.
    fn forward(&self, inputs: &[Embedding]) -> Result<Logits>;

    /// Total forward passes run so far.
    fn forward_count(&self) -> u64;

    /// Per-layer hidden states at the last position, for backends that expose
    /// them. Counts as a forward pass when supported.
    fn forward_hidden(&self, _inputs: &[Embedding]) -> Result<Option<Vec<Vec<f64>>>> {
        Ok(None)
    }

    fn embed_all(&self, ids: &[TokenId]) -> Result<Vec<Embedding>> {
        ids.iter().map(|&id| self.embed(id)).collect()
    }
}

pub(crate) fn check_inputs(inputs: &[Embedding], dim: usize, context: Option<usize>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = inputs.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    if let Some(max) = context {
        if inputs.len() > max {
            return Err(Error::ContextOverflow {
                len: inputs.len(),
                max,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_token(id: TokenId, vocab_size: usize) -> Result<()> {
    if (id as usize) < vocab_size {
        Ok(())
    } else {
        Err(Error::OutOfVocabulary {
            id,
            size: vocab_size,
        })
    }
}

/// Softmax of `logits / temperature`. Entries that underflow to zero are
/// dropped from the sparse result.
pub fn next_distribution(logits: &Logits, temperature: f64) -> Result<Distribution> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParam(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let values = logits.as_slice();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights
        .into_iter()
        .enumerate()
        .map(|(t, w)| (t as TokenId, w / total))
        .collect())
}

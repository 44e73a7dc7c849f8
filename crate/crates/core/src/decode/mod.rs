//! Draft generation.
//!
//! [`Decoder`] implements superposed decoding: after a plain first step that
//! seeds `k` drafts with the `k` most probable tokens, every further position
//! costs exactly one forward pass over the prefix followed by the history of
//! superposed embeddings. Each draft rescores the shared next-token
//! distribution with its own n-gram context, and the `k` best
//! `(draft, token)` extensions survive.
//!
//! The module also holds the conventional baselines (greedy, beam, top-k,
//! nucleus) and the nucleus-then-superposed splice.

mod baseline;
mod log;
mod spd;
mod splice;
mod superpose;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::Embedding;
use crate::ngram::SmoothingParams;
use crate::TokenId;

pub use baseline::{baseline_generate, truncate, BaselineOutput, BaselineParams, BeamSearch, Strategy};
pub use log::{read_jsonl, replay, write_jsonl, Choice, StepKind, StepRecord};
pub use spd::{reset, spd_generate, spd_step, Decoder, Selection};
pub use splice::{ns_spd_generate, SpliceOutput, SpliceParams};
pub use superpose::{superpose, superposition_weights};

/// One candidate continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    /// Prefix followed by generated tokens.
    pub tokens: Vec<TokenId>,
    /// Natural log of the cumulative draft probability.
    pub log_score: f64,
    /// Set once the draft has emitted the stop token; finished drafts never grow.
    pub finished: bool,
}

impl Draft {
    pub fn new(tokens: Vec<TokenId>, log_score: f64) -> Self {
        Self {
            tokens,
            log_score,
            finished: false,
        }
    }

    /// Cumulative probability in linear space.
    pub fn score(&self) -> f64 {
        self.log_score.exp()
    }

    pub fn last_token(&self) -> Option<TokenId> {
        self.tokens.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdParams {
    /// Number of drafts.
    pub k: usize,
    /// Tokens of the shared distribution kept per step; defaults to `k`.
    pub pool: Option<usize>,
    /// Generated positions per call.
    pub steps: usize,
    pub smoothing: SmoothingParams,
    pub temperature: f64,
    /// Collapse to one sampled draft every `s` positions.
    pub reset_every: Option<usize>,
    pub ngram_enabled: bool,
    pub stop_id: Option<TokenId>,
    pub seed: u64,
}

impl Default for SpdParams {
    fn default() -> Self {
        Self {
            k: 3,
            pool: None,
            steps: 10,
            smoothing: SmoothingParams::default(),
            temperature: 0.06,
            reset_every: None,
            ngram_enabled: true,
            stop_id: None,
            seed: 0,
        }
    }
}

impl SpdParams {
    pub fn pool(&self) -> usize {
        self.pool.unwrap_or(self.k)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidParam(m));
        if self.k == 0 {
            return invalid("k must be at least 1".into());
        }
        if self.pool() < self.k {
            return invalid(format!("pool {} smaller than k {}", self.pool(), self.k));
        }
        if self.pool() > vocab_size {
            return invalid(format!("pool {} exceeds vocabulary size {vocab_size}", self.pool()));
        }
        if self.steps == 0 {
            return invalid("steps must be at least 1".into());
        }
        if self.reset_every == Some(0) {
            return invalid("reset interval must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return invalid(format!("temperature {} must be positive", self.temperature));
        }
        if let Some(stop) = self.stop_id {
            if stop as usize >= vocab_size {
                return invalid(format!("stop id {stop} outside vocabulary"));
            }
        }
        self.smoothing.validate()
    }
}

/// Everything one decoding session carries between steps.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub(crate) prefix: Vec<TokenId>,
    pub(crate) prefix_inputs: Vec<Embedding>,
    pub(crate) drafts: Vec<Draft>,
    pub(crate) superposed: Vec<Embedding>,
    /// True until the first step from the current prefix has run.
    pub(crate) fresh: bool,
    pub(crate) positions: usize,
    pub(crate) forwards_used: u64,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) log: Vec<StepRecord>,
    pub(crate) ngram_nanos: u128,
}

impl DecodeState {
    pub(crate) fn new(prefix: Vec<TokenId>, prefix_inputs: Vec<Embedding>, seed: u64) -> Self {
        let drafts = vec![Draft::new(prefix.clone(), 0.0)];
        Self {
            prefix,
            prefix_inputs,
            drafts,
            superposed: Vec::new(),
            fresh: true,
            positions: 0,
            forwards_used: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: Vec::new(),
            ngram_nanos: 0,
        }
    }

    /// Current prefix shared by every draft.
    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    /// Drafts ordered by score, best first.
    pub fn drafts(&self) -> &[Draft] {
        &self.drafts
    }

    pub fn superposed_history(&self) -> &[Embedding] {
        &self.superposed
    }

    /// Positions generated since the state was created, across resets.
    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn forwards_used(&self) -> u64 {
        self.forwards_used
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn is_fresh(&self) -> bool {
        self.fresh
    }

    pub fn all_finished(&self) -> bool {
        !self.fresh && self.drafts.iter().all(|d| d.finished)
    }

    /// Multiplies every draft score by `exp(log_factor)`. Superposition
    /// weights and later selections are unaffected.
    pub fn scale_scores(&mut self, log_factor: f64) {
        for d in &mut self.drafts {
            d.log_score += log_factor;
        }
    }

    /// Time spent in n-gram lookups, in nanoseconds. Always 0 in browser wasm.
    pub fn ngram_nanos(&self) -> u128 {
        self.ngram_nanos
    }
}

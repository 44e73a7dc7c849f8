use std::cmp::Ordering;

use rand::Rng;

use super::log::{Choice, StepKind, StepRecord};
use super::superpose::{superpose_drafts, superposition_weights};
use super::{DecodeState, Draft, SpdParams};
use crate::error::{Error, Result};
use crate::lm::{next_distribution, LanguageModel};
use crate::ngram::{smooth, NGramEnsemble};
use crate::TokenId;

/// Which draft a reset keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Index(usize),
    /// Draw proportionally to draft score from the state's generator.
    Sample,
}

/// Runs `f` and reports its wall time. Browser wasm has no monotonic
/// clock in std, so there the time is always 0.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, u128) {
    let t0 = std::time::Instant::now();
    let out = f();
    (out, t0.elapsed().as_nanos())
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, u128) {
    (f(), 0)
}

/// Superposed decoder bound to a model, an optional n-gram ensemble and
/// validated parameters.
pub struct Decoder<'a> {
    model: &'a dyn LanguageModel,
    ngram: Option<&'a NGramEnsemble>,
    params: SpdParams,
}

struct Candidate {
    log_score: f64,
    parent: usize,
    token: Option<TokenId>,
    p_f: Option<f64>,
}

// Score descending, then parent ascending, then token ascending (carried
// drafts sort before their extensions).
fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a dyn LanguageModel, ngram: Option<&'a NGramEnsemble>, params: SpdParams) -> Result<Self> {
        params.validate(model.vocab_size())?;
        if params.ngram_enabled && ngram.is_none() {
            return Err(Error::MissingNgram);
        }
        Ok(Self { model, ngram, params })
    }

    pub fn params(&self) -> &SpdParams {
        &self.params
    }

    /// A state positioned right after `prefix`, before any forward pass.
    pub fn start(&self, prefix: &[TokenId]) -> Result<DecodeState> {
        if prefix.is_empty() {
            return Err(Error::InvalidParam("prefix must be nonempty".into()));
        }
        let inputs = self.model.embed_all(prefix)?;
        Ok(DecodeState::new(prefix.to_vec(), inputs, self.params.seed))
    }

    /// Runs `params.steps` positions from `prefix`.
    pub fn generate(&self, prefix: &[TokenId]) -> Result<DecodeState> {
        let mut state = self.start(prefix)?;
        self.extend(&mut state, self.params.steps)?;
        Ok(state)
    }

    /// Generates up to `steps` more positions, applying scheduled resets.
    /// Stops early once every draft is finished.
    pub fn extend(&self, state: &mut DecodeState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            if state.all_finished() {
                break;
            }
            if let Some(s) = self.params.reset_every {
                if !state.fresh && state.positions.is_multiple_of(s) {
                    reset(state, self.model, Selection::Sample)?;
                }
            }
            self.advance(state)?;
        }
        Ok(())
    }

    /// One generated position: the first step on a fresh state, a superposed
    /// step otherwise.
    pub fn advance(&self, state: &mut DecodeState) -> Result<()> {
        if state.fresh {
            self.first_step(state)
        } else {
            self.step(state)
        }
    }

    fn first_step(&self, state: &mut DecodeState) -> Result<()> {
        let k = self.params.k;
        let logits = self.model.forward(&state.prefix_inputs)?;
        state.forwards_used += 1;
        let p = next_distribution(&logits, self.params.temperature)?;
        let top: Vec<(TokenId, f64)> = p.ranked().into_iter().take(k).collect();
        if top.len() < k {
            return Err(Error::InsufficientSupport {
                available: top.len(),
                needed: k,
            });
        }
        state.drafts = top
            .iter()
            .map(|&(t, prob)| {
                let mut tokens = state.prefix.clone();
                tokens.push(t);
                Draft {
                    tokens,
                    log_score: prob.ln(),
                    finished: Some(t) == self.params.stop_id,
                }
            })
            .collect();
        state.positions += 1;
        state.log.push(StepRecord {
            step: state.positions,
            kind: StepKind::First,
            choices: top
                .iter()
                .map(|&(t, prob)| Choice {
                    parent: None,
                    token: Some(t),
                    p_f: Some(prob),
                })
                .collect(),
        });
        state.superposed.clear();
        if state.drafts.iter().any(|d| !d.finished) {
            state.superposed.push(superpose_drafts(self.model, &state.drafts)?);
        }
        state.fresh = false;
        Ok(())
    }

    fn step(&self, state: &mut DecodeState) -> Result<()> {
        if state.all_finished() {
            return Err(Error::AllFinished);
        }
        let mut inputs = state.prefix_inputs.clone();
        inputs.extend(state.superposed.iter().cloned());
        let logits = self.model.forward(&inputs)?;
        state.forwards_used += 1;
        let pooled = next_distribution(&logits, self.params.temperature)?.top(self.params.pool());

        let mut candidates = Vec::new();
        for (i, d) in state.drafts.iter().enumerate() {
            if d.finished {
                candidates.push(Candidate {
                    log_score: d.log_score,
                    parent: i,
                    token: None,
                    p_f: None,
                });
                continue;
            }
            let scored = match (self.params.ngram_enabled, self.ngram) {
                (true, Some(ngram)) => {
                    let (p_ng, nanos) = timed(|| ngram.interpolated_dist(&d.tokens));
                    state.ngram_nanos += nanos;
                    smooth(&pooled, &p_ng, self.params.smoothing)?
                }
                _ => pooled.clone(),
            };
            candidates.extend(scored.iter().map(|(t, p)| Candidate {
                log_score: d.log_score + p.ln(),
                parent: i,
                token: Some(t),
                p_f: Some(p),
            }));
        }
        let k = self.params.k;
        if candidates.len() < k {
            return Err(Error::InsufficientSupport {
                available: candidates.len(),
                needed: k,
            });
        }
        candidates.sort_by(candidate_order);
        candidates.truncate(k);

        let drafts = candidates
            .iter()
            .map(|c| {
                let parent = &state.drafts[c.parent];
                match c.token {
                    None => parent.clone(),
                    Some(t) => {
                        let mut tokens = parent.tokens.clone();
                        tokens.push(t);
                        Draft {
                            tokens,
                            log_score: c.log_score,
                            finished: Some(t) == self.params.stop_id,
                        }
                    }
                }
            })
            .collect();
        state.drafts = drafts;
        state.positions += 1;
        state.log.push(StepRecord {
            step: state.positions,
            kind: StepKind::Step,
            choices: candidates
                .iter()
                .map(|c| Choice {
                    parent: Some(c.parent),
                    token: c.token,
                    p_f: c.p_f,
                })
                .collect(),
        });
        if state.drafts.iter().any(|d| !d.finished) {
            state.superposed.push(superpose_drafts(self.model, &state.drafts)?);
        }
        Ok(())
    }
}

/// Collapses the state onto one draft. Its tokens become the new prefix and
/// the next position runs a fresh first step; forward counts carry over.
pub fn reset(state: &mut DecodeState, model: &dyn LanguageModel, selection: Selection) -> Result<usize> {
    let n = state.drafts.len();
    let index = match selection {
        Selection::Index(i) if i < n => i,
        Selection::Index(i) => return Err(Error::IndexOutOfRange { index: i, len: n }),
        Selection::Sample => {
            let logs: Vec<f64> = state.drafts.iter().map(|d| d.log_score).collect();
            let weights = superposition_weights(&logs);
            let mut u: f64 = state.rng.random();
            let mut chosen = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        }
    };
    let chosen = state.drafts[index].tokens.clone();
    let extra = model.embed_all(&chosen[state.prefix.len()..])?;
    state.prefix_inputs.extend(extra);
    state.prefix = chosen.clone();
    state.drafts = vec![Draft::new(chosen, 0.0)];
    state.superposed.clear();
    state.fresh = true;
    state.log.push(StepRecord {
        step: state.positions,
        kind: StepKind::Reset,
        choices: vec![Choice {
            parent: Some(index),
            token: None,
            p_f: None,
        }],
    });
    Ok(index)
}

/// Superposed generation of `params.k` drafts over `params.steps` positions.
pub fn spd_generate(
    prefix: &[TokenId],
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    params: &SpdParams,
) -> Result<DecodeState> {
    Decoder::new(model, ngram, params.clone())?.generate(prefix)
}

/// Advances an existing state by one position.
pub fn spd_step(
    state: &mut DecodeState,
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    params: &SpdParams,
) -> Result<()> {
    Decoder::new(model, ngram, params.clone())?.advance(state)
}

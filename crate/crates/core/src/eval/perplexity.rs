use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::{next_distribution, LanguageModel};
use crate::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perplexity {
    pub value: f64,
    /// Mean negative log-likelihood in bits.
    pub nll_bits: f64,
    pub scored: usize,
    /// First scored position whose token had zero probability; `value` is
    /// infinite when set.
    pub zero_probability_at: Option<usize>,
}

/// Perplexity of `tokens[span]`, each token conditioned on everything to
/// its left. Computed in base 2 so that uniform models give exact results.
pub fn perplexity(model: &dyn LanguageModel, tokens: &[TokenId], span: Range<usize>) -> Result<Perplexity> {
    if span.is_empty() {
        return Err(Error::InvalidParam("scored span is empty".into()));
    }
    if span.start == 0 {
        return Err(Error::InvalidParam("the first token has no left context to score against".into()));
    }
    if span.end > tokens.len() {
        return Err(Error::IndexOutOfRange {
            index: span.end,
            len: tokens.len(),
        });
    }
    let inputs = model.embed_all(&tokens[..span.end - 1])?;
    let mut bits = 0.0;
    for j in span.clone() {
        let p = next_distribution(&model.forward(&inputs[..j])?, 1.0)?.get(tokens[j]);
        if p == 0.0 {
            return Ok(Perplexity {
                value: f64::INFINITY,
                nll_bits: f64::INFINITY,
                scored: span.len(),
                zero_probability_at: Some(j),
            });
        }
        bits -= p.log2();
    }
    let nll_bits = bits / span.len() as f64;
    Ok(Perplexity {
        value: nll_bits.exp2(),
        nll_bits,
        scored: span.len(),
        zero_probability_at: None,
    })
}

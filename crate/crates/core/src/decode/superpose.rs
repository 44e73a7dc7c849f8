use super::Draft;
use crate::error::{Error, Result};
use crate::lm::tensor::axpy;
use crate::lm::{Embedding, LanguageModel};
use crate::TokenId;

/// Normalized weights `γ_i = p_i / Σ p_j` from log-space scores.
///
/// Subtracting the maximum keeps the computation exact for equal scores
/// (each weight is then `1/k`) and safe for very small probabilities.
pub fn superposition_weights(log_scores: &[f64]) -> Vec<f64> {
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_scores.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `Σ γ_i · embed(token_i)` with `γ` proportional to the linear-space `scores`.
pub fn superpose(model: &dyn LanguageModel, tokens: &[TokenId], scores: &[f64]) -> Result<Embedding> {
    if tokens.is_empty() {
        return Err(Error::InvalidParam("nothing to superpose".into()));
    }
    if tokens.len() != scores.len() {
        return Err(Error::InvalidParam("tokens and scores differ in length".into()));
    }
    if scores.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParam("draft scores must be positive".into()));
    }
    let logs: Vec<f64> = scores.iter().map(|s| s.ln()).collect();
    mix(model, tokens, &logs)
}

/// Superposes the last tokens of the unfinished drafts.
pub(crate) fn superpose_drafts(model: &dyn LanguageModel, drafts: &[Draft]) -> Result<Embedding> {
    let (tokens, logs): (Vec<TokenId>, Vec<f64>) = drafts
        .iter()
        .filter(|d| !d.finished)
        .map(|d| (d.last_token().expect("drafts are never empty"), d.log_score))
        .unzip();
    if tokens.is_empty() {
        return Err(Error::AllFinished);
    }
    mix(model, &tokens, &logs)
}

fn mix(model: &dyn LanguageModel, tokens: &[TokenId], log_scores: &[f64]) -> Result<Embedding> {
    let gamma = superposition_weights(log_scores);
    let mut out = Embedding::zeros(model.dim());
    for (&t, g) in tokens.iter().zip(gamma) {
        axpy(out.as_mut_slice(), g, model.embed(t)?.as_slice());
    }
    Ok(out)
}

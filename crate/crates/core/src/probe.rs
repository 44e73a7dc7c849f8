//! Linearity probe: how closely a backend's output on a superposed input
//! matches the weighted mix of its outputs on the component inputs.

use std::fmt::Write as _;

use serde::Serialize;

use crate::decode::{superposition_weights, BeamSearch};
use crate::error::{Error, Result};
use crate::lm::tensor::{axpy, cosine};
use crate::lm::{Embedding, LanguageModel};
use crate::TokenId;

/// Which vector the probe compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ProbeTarget {
    #[default]
    Logits,
    /// Hidden state after the given block, for backends that expose one.
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub backend: String,
    pub k: usize,
    pub timesteps: usize,
    pub batches: usize,
    /// `(mean cosine, standard deviation)` across batches, one per timestep.
    pub per_timestep: Vec<(f64, f64)>,
}

impl LinearityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestep,mean_cos,std_cos\n");
        for (t, (mean, std)) in self.per_timestep.iter().enumerate() {
            writeln!(out, "{},{mean:.12},{std:.12}", t + 1).unwrap();
        }
        out
    }
}

fn probe_vector(model: &dyn LanguageModel, inputs: &[Embedding], target: ProbeTarget) -> Result<Vec<f64>> {
    match target {
        ProbeTarget::Logits => Ok(model.forward(inputs)?.into_vec()),
        ProbeTarget::Layer(l) => {
            let layers = model
                .forward_hidden(inputs)?
                .ok_or_else(|| Error::InvalidParam(format!("backend {} exposes no hidden states", model.name())))?;
            let n = layers.len();
            layers
                .into_iter()
                .nth(l)
                .ok_or_else(|| Error::InvalidParam(format!("layer {l} out of range ({n} available)")))
        }
    }
}

/// Cosine between `f(context ++ Σγ_i·z_i)` and `Σγ_i·f(context ++ z_i)`.
pub fn superposition_cosine(
    model: &dyn LanguageModel,
    context: &[Embedding],
    tokens: &[TokenId],
    weights: &[f64],
    target: ProbeTarget,
) -> Result<f64> {
    if tokens.is_empty() || tokens.len() != weights.len() {
        return Err(Error::InvalidParam("tokens and weights must be nonempty and aligned".into()));
    }
    let mut inputs = context.to_vec();
    let mut mixed = Embedding::zeros(model.dim());
    let mut combined: Option<Vec<f64>> = None;
    for (&t, &g) in tokens.iter().zip(weights) {
        let z = model.embed(t)?;
        axpy(mixed.as_mut_slice(), g, z.as_slice());
        inputs.push(z);
        let out = probe_vector(model, &inputs, target)?;
        inputs.pop();
        let acc = combined.get_or_insert_with(|| vec![0.0; out.len()]);
        axpy(acc, g, &out);
    }
    inputs.push(mixed);
    let superposed = probe_vector(model, &inputs, target)?;
    Ok(cosine(&superposed, &combined.expect("tokens nonempty")))
}

/// Per-timestep cosine for one prefix. Beam search with `k` beams supplies
/// the tokens; earlier timesteps enter the context as superposed embeddings.
fn probe_prefix(
    model: &dyn LanguageModel,
    prefix: &[TokenId],
    k: usize,
    timesteps: usize,
    target: ProbeTarget,
) -> Result<Vec<f64>> {
    let mut beam = BeamSearch::new(model, prefix, k, 1.0, None)?;
    let mut context = model.embed_all(prefix)?;
    let mut out = Vec::with_capacity(timesteps);
    for _ in 0..timesteps {
        beam.step()?;
        let tokens: Vec<TokenId> = beam.beams().iter().map(|b| *b.tokens.last().unwrap()).collect();
        let weights = superposition_weights(&beam.beams().iter().map(|b| b.log_score).collect::<Vec<_>>());
        out.push(superposition_cosine(model, &context, &tokens, &weights, target)?);
        let mut mixed = Embedding::zeros(model.dim());
        for (&t, &g) in tokens.iter().zip(&weights) {
            axpy(mixed.as_mut_slice(), g, model.embed(t)?.as_slice());
        }
        context.push(mixed);
    }
    Ok(out)
}

/// Mean cosine per batch, then mean and sample standard deviation across
/// batches at each timestep.
pub fn linearity_probe(
    model: &dyn LanguageModel,
    batches: &[Vec<Vec<TokenId>>],
    k: usize,
    timesteps: usize,
    target: ProbeTarget,
) -> Result<LinearityReport> {
    if k < 2 {
        return Err(Error::InvalidParam("probe needs k >= 2".into()));
    }
    if k > model.vocab_size() {
        return Err(Error::InvalidParam(format!("k {k} exceeds vocabulary size")));
    }
    if timesteps == 0 {
        return Err(Error::InvalidParam("timesteps must be at least 1".into()));
    }
    if batches.is_empty() || batches.iter().any(|b| b.is_empty() || b.iter().any(|p| p.is_empty())) {
        return Err(Error::EmptyInput);
    }
    if let Some(max) = model.context_len() {
        let longest = batches.iter().flatten().map(Vec::len).max().unwrap_or(0);
        if longest + timesteps > max {
            return Err(Error::ContextOverflow {
                len: longest + timesteps,
                max,
            });
        }
    }

    let mut batch_means = vec![Vec::with_capacity(batches.len()); timesteps];
    for batch in batches {
        let mut sums = vec![0.0; timesteps];
        for prefix in batch {
            for (s, c) in sums.iter_mut().zip(probe_prefix(model, prefix, k, timesteps, target)?) {
                *s += c;
            }
        }
        for (t, s) in sums.into_iter().enumerate() {
            batch_means[t].push(s / batch.len() as f64);
        }
    }
    let per_timestep = batch_means.iter().map(|xs| mean_std(xs)).collect();
    Ok(LinearityReport {
        backend: model.name().to_string(),
        k,
        timesteps,
        batches: batches.len(),
        per_timestep,
    })
}

/// Mean and sample standard deviation; the deviation is 0 for one sample.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

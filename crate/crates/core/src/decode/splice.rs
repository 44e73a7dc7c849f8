use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::baseline::sample_one;
use super::{BaselineParams, Decoder, Draft, SpdParams, Strategy};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::ngram::NGramEnsemble;
use crate::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct SpliceParams {
    pub nucleus_drafts: usize,
    pub top_p: f64,
    pub nucleus_temperature: f64,
    /// Positions sampled by nucleus before superposed decoding takes over.
    pub split: usize,
    /// Total positions are `spd.steps`; `spd.k` drafts grow from each nucleus draft.
    pub spd: SpdParams,
}

#[derive(Debug, Clone)]
pub struct SpliceOutput {
    /// One group per nucleus draft, each holding up to `k` drafts.
    pub groups: Vec<Vec<Draft>>,
    pub forwards_used: u64,
}

impl SpliceOutput {
    pub fn drafts(&self) -> impl Iterator<Item = &Draft> {
        self.groups.iter().flatten()
    }
}

/// Samples `n` nucleus drafts for `split` positions, then grows each with
/// superposed decoding for the remaining positions. Costs `n · steps` forwards.
///
/// Group draft scores are the nucleus draft score times the superposed score.
pub fn ns_spd_generate(
    prefix: &[TokenId],
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    params: &SpliceParams,
) -> Result<SpliceOutput> {
    let total = params.spd.steps;
    if params.nucleus_drafts == 0 {
        return Err(Error::InvalidParam("need at least one nucleus draft".into()));
    }
    if params.split > total {
        return Err(Error::InvalidParam(format!("split {} beyond {total} steps", params.split)));
    }
    if prefix.is_empty() {
        return Err(Error::InvalidParam("prefix must be nonempty".into()));
    }
    let nucleus = BaselineParams {
        strategy: Strategy::Nucleus { p: params.top_p },
        num_drafts: 1,
        steps: params.split,
        temperature: params.nucleus_temperature,
        seed: params.spd.seed,
        stop_id: params.spd.stop_id,
    };
    let mut spd = params.spd.clone();
    spd.steps = total - params.split;
    let decoder = if spd.steps > 0 {
        Some(Decoder::new(model, ngram, spd)?)
    } else {
        params.spd.validate(model.vocab_size())?;
        None
    };
    if !(params.top_p > 0.0 && params.top_p <= 1.0) {
        return Err(Error::InvalidParam("nucleus p must be in (0, 1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.spd.seed);
    let mut groups = Vec::with_capacity(params.nucleus_drafts);
    let mut forwards = 0;
    for _ in 0..params.nucleus_drafts {
        let head = if params.split == 0 {
            Draft::new(prefix.to_vec(), 0.0)
        } else {
            let (d, f) = sample_one(prefix, model, &nucleus, &mut rng)?;
            forwards += f;
            d
        };
        let group = match &decoder {
            Some(dec) if !head.finished => {
                let state = dec.generate(&head.tokens)?;
                forwards += state.forwards_used();
                state
                    .drafts()
                    .iter()
                    .map(|d| Draft {
                        log_score: head.log_score + d.log_score,
                        ..d.clone()
                    })
                    .collect()
            }
            _ => vec![head],
        };
        groups.push(group);
    }
    Ok(SpliceOutput { groups, forwards_used: forwards })
}

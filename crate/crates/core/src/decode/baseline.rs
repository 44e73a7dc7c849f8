use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Draft;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::lm::{next_distribution, LanguageModel};
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Greedy,
    Beam { width: usize },
    TopK { k: usize },
    Nucleus { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub strategy: Strategy,
    /// Independent samples for top-k and nucleus; ignored otherwise.
    pub num_drafts: usize,
    pub steps: usize,
    pub temperature: f64,
    pub seed: u64,
    pub stop_id: Option<TokenId>,
}

impl BaselineParams {
    pub fn new(strategy: Strategy, num_drafts: usize, steps: usize) -> Self {
        Self {
            strategy,
            num_drafts,
            steps,
            temperature: 1.0,
            seed: 0,
            stop_id: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidParam(m.to_string()));
        match self.strategy {
            Strategy::Beam { width: 0 } => return invalid("beam width must be at least 1"),
            Strategy::TopK { k: 0 } => return invalid("top-k needs k >= 1"),
            Strategy::Nucleus { p } if !(p > 0.0 && p <= 1.0) => return invalid("nucleus p must be in (0, 1]"),
            Strategy::TopK { .. } | Strategy::Nucleus { .. } if self.num_drafts == 0 => {
                return invalid("need at least one draft")
            }
            _ => {}
        }
        if self.steps == 0 {
            return invalid("steps must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return invalid("temperature must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub drafts: Vec<Draft>,
    /// Forward passes spent on each returned draft.
    pub forwards_per_draft: Vec<u64>,
    pub forwards_used: u64,
}

/// Restricts `p` to the tokens a sampling strategy may draw from, renormalized.
/// Greedy and beam keep only the argmax.
pub fn truncate(p: &Distribution, strategy: Strategy) -> Distribution {
    match strategy {
        Strategy::TopK { k } => p.top(k).renormalized(),
        Strategy::Nucleus { p: top_p } => p.nucleus(top_p),
        Strategy::Greedy | Strategy::Beam { .. } => p.top(1).renormalized(),
    }
}

pub fn baseline_generate(prefix: &[TokenId], model: &dyn LanguageModel, params: &BaselineParams) -> Result<BaselineOutput> {
    params.validate()?;
    if prefix.is_empty() {
        return Err(Error::InvalidParam("prefix must be nonempty".into()));
    }
    match params.strategy {
        Strategy::Beam { width } => {
            let mut beam = BeamSearch::new(model, prefix, width, params.temperature, params.stop_id)?;
            for _ in 0..params.steps {
                if !beam.step()? {
                    break;
                }
            }
            let forwards_per_draft = beam.beams.iter().map(|_| beam.forwards / width as u64).collect();
            Ok(BaselineOutput {
                drafts: beam.beams,
                forwards_per_draft,
                forwards_used: beam.forwards,
            })
        }
        Strategy::Greedy => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let (d, f) = sample_one(prefix, model, params, &mut rng)?;
            Ok(BaselineOutput {
                drafts: vec![d],
                forwards_per_draft: vec![f],
                forwards_used: f,
            })
        }
        Strategy::TopK { .. } | Strategy::Nucleus { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut drafts = Vec::with_capacity(params.num_drafts);
            let mut forwards = Vec::with_capacity(params.num_drafts);
            for _ in 0..params.num_drafts {
                let (d, f) = sample_one(prefix, model, params, &mut rng)?;
                drafts.push(d);
                forwards.push(f);
            }
            let total = forwards.iter().sum();
            Ok(BaselineOutput {
                drafts,
                forwards_per_draft: forwards,
                forwards_used: total,
            })
        }
    }
}

/// Extends one draft token by token. Scores accumulate the untruncated
/// tempered probability of each chosen token.
pub(crate) fn sample_one(
    prefix: &[TokenId],
    model: &dyn LanguageModel,
    params: &BaselineParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Draft, u64)> {
    let mut draft = Draft::new(prefix.to_vec(), 0.0);
    let mut inputs = model.embed_all(prefix)?;
    let mut forwards = 0;
    for _ in 0..params.steps {
        let p = next_distribution(&model.forward(&inputs)?, params.temperature)?;
        forwards += 1;
        let t = match params.strategy {
            Strategy::Greedy | Strategy::Beam { .. } => p.argmax(),
            s => truncate(&p, s).sample(rng),
        }
        .ok_or(Error::InsufficientSupport { available: 0, needed: 1 })?;
        draft.log_score += p.get(t).ln();
        draft.tokens.push(t);
        inputs.push(model.embed(t)?);
        if Some(t) == params.stop_id {
            draft.finished = true;
            break;
        }
    }
    Ok((draft, forwards))
}

/// Standard beam search: every live beam runs its own forward pass each step.
///
/// Beams start as `width` copies of the prefix, so the first step also costs
/// `width` forwards, but only the first copy contributes candidates.
pub struct BeamSearch<'a> {
    model: &'a dyn LanguageModel,
    width: usize,
    temperature: f64,
    stop_id: Option<TokenId>,
    beams: Vec<Draft>,
    started: bool,
    forwards: u64,
}

impl<'a> BeamSearch<'a> {
    pub fn new(
        model: &'a dyn LanguageModel,
        prefix: &[TokenId],
        width: usize,
        temperature: f64,
        stop_id: Option<TokenId>,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidParam("beam width must be at least 1".into()));
        }
        if prefix.is_empty() {
            return Err(Error::InvalidParam("prefix must be nonempty".into()));
        }
        Ok(Self {
            model,
            width,
            temperature,
            stop_id,
            beams: vec![Draft::new(prefix.to_vec(), 0.0); width],
            started: false,
            forwards: 0,
        })
    }

    /// Beams ordered by score, best first.
    pub fn beams(&self) -> &[Draft] {
        &self.beams
    }

    pub fn forwards_used(&self) -> u64 {
        self.forwards
    }

    /// Advances one position. Returns false when every beam has finished.
    pub fn step(&mut self) -> Result<bool> {
        if self.started && self.beams.iter().all(|b| b.finished) {
            return Ok(false);
        }
        // (log score, beam, token)
        let mut cands: Vec<(f64, usize, Option<TokenId>)> = Vec::new();
        for (i, b) in self.beams.iter().enumerate() {
            if b.finished {
                cands.push((b.log_score, i, None));
                continue;
            }
            let logits = self.model.forward(&self.model.embed_all(&b.tokens)?)?;
            self.forwards += 1;
            if !self.started && i > 0 {
                continue;
            }
            let p = next_distribution(&logits, self.temperature)?;
            for (t, q) in p.top(self.width).iter() {
                cands.push((b.log_score + q.ln(), i, Some(t)));
            }
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        if cands.len() < self.width {
            return Err(Error::InsufficientSupport {
                available: cands.len(),
                needed: self.width,
            });
        }
        self.beams = cands[..self.width]
            .iter()
            .map(|&(score, i, t)| {
                let parent = &self.beams[i];
                match t {
                    None => parent.clone(),
                    Some(t) => {
                        let mut tokens = parent.tokens.clone();
                        tokens.push(t);
                        Draft {
                            tokens,
                            log_score: score,
                            finished: Some(t) == self.stop_id,
                        }
                    }
                }
            })
            .collect();
        self.started = true;
        Ok(true)
    }
}

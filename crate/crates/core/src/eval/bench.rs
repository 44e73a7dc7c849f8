use std::time::Instant;

use serde::Serialize;

use crate::decode::{baseline_generate, BaselineParams, Decoder, SpdParams, Strategy};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::ngram::NGramEnsemble;
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStrategy {
    Spd,
    Nucleus,
    TopK,
    Beam,
}

impl BenchStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchStrategy::Spd => "spd",
            BenchStrategy::Nucleus => "nucleus",
            BenchStrategy::TopK => "topk",
            BenchStrategy::Beam => "beam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "spd" => BenchStrategy::Spd,
            "nucleus" => BenchStrategy::Nucleus,
            "topk" => BenchStrategy::TopK,
            "beam" => BenchStrategy::Beam,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub strategies: Vec<BenchStrategy>,
    /// Draft counts to compare.
    pub ks: Vec<usize>,
    /// Template for superposed runs; `k` is overridden per row.
    pub spd: SpdParams,
    pub top_p: f64,
    pub top_k: usize,
    pub warmup: usize,
    /// Timed passes over all prompts; only used when timing.
    pub repeats: usize,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub strategy: BenchStrategy,
    pub k: usize,
    pub prompts: usize,
    /// Forward passes over all prompts, taken from the model's counter.
    pub forwards: u64,
    pub drafts: usize,
    pub tokens: usize,
}

/// Exact forward accounting for one pass over the prompts.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ComputeLedger {
    pub rows: Vec<LedgerRow>,
}

impl ComputeLedger {
    pub fn forwards(&self, strategy: BenchStrategy, k: usize) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.k == k)
            .map(|r| r.forwards)
    }

    /// Forwards of `strategy` over forwards of superposed decoding at the same `k`.
    pub fn ratio(&self, strategy: BenchStrategy, k: usize) -> Option<f64> {
        let spd = self.forwards(BenchStrategy::Spd, k)?;
        Some(self.forwards(strategy, k)? as f64 / spd as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub strategy: BenchStrategy,
    pub k: usize,
    pub median_ms: f64,
    /// Median time inside n-gram lookups; superposed decoding only.
    pub ngram_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub ledger: ComputeLedger,
    pub timing: Option<Vec<TimingRow>>,
}

impl BenchReport {
    /// One row per strategy and `k`; timing columns only when measured.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,k,prompts,forwards,drafts,tokens,forward_ratio");
        if self.timing.is_some() {
            out.push_str(",median_ms,ngram_ms");
        }
        out.push('\n');
        for (i, r) in self.ledger.rows.iter().enumerate() {
            let ratio = self
                .ledger
                .ratio(r.strategy, r.k)
                .map(|x| x.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{ratio}",
                r.strategy.as_str(),
                r.k,
                r.prompts,
                r.forwards,
                r.drafts,
                r.tokens
            ));
            if let Some(t) = &self.timing {
                out.push_str(&format!(",{:.3},{:.3}", t[i].median_ms, t[i].ngram_ms));
            }
            out.push('\n');
        }
        out
    }
}

struct PassResult {
    forwards: u64,
    drafts: usize,
    tokens: usize,
    ngram_nanos: u128,
}

fn run_pass(
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    prompts: &[Vec<TokenId>],
    strategy: BenchStrategy,
    k: usize,
    config: &BenchConfig,
) -> Result<PassResult> {
    let before = model.forward_count();
    let mut reported = 0;
    let mut drafts = 0;
    let mut tokens = 0;
    let mut ngram_nanos = 0;
    for (i, prompt) in prompts.iter().enumerate() {
        let seed = config.spd.seed.wrapping_add(i as u64);
        if strategy == BenchStrategy::Spd {
            let params = SpdParams {
                k,
                seed,
                ..config.spd.clone()
            };
            let state = Decoder::new(model, ngram, params)?.generate(prompt)?;
            reported += state.forwards_used();
            ngram_nanos += state.ngram_nanos();
            drafts += state.drafts().len();
            tokens += state.drafts().iter().map(|d| d.tokens.len() - prompt.len()).sum::<usize>();
        } else {
            let s = match strategy {
                BenchStrategy::Nucleus => Strategy::Nucleus { p: config.top_p },
                BenchStrategy::TopK => Strategy::TopK { k: config.top_k },
                _ => Strategy::Beam { width: k },
            };
            let params = BaselineParams {
                strategy: s,
                num_drafts: k,
                steps: config.spd.steps,
                temperature: 1.0,
                seed,
                stop_id: config.spd.stop_id,
            };
            let out = baseline_generate(prompt, model, &params)?;
            reported += out.forwards_used;
            drafts += out.drafts.len();
            tokens += out.drafts.iter().map(|d| d.tokens.len() - prompt.len()).sum::<usize>();
        }
    }
    let forwards = model.forward_count() - before;
    if forwards != reported {
        return Err(Error::Malformed(format!(
            "{} reported {reported} forwards but the model counted {forwards}",
            strategy.as_str()
        )));
    }
    Ok(PassResult {
        forwards,
        drafts,
        tokens,
        ngram_nanos,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs every strategy at every `k` over the prompts, recording exact forward
/// counts and, when enabled, wall-clock medians after warm-up passes.
pub fn bench_forwards(
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    prompts: &[Vec<TokenId>],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if prompts.is_empty() {
        return Err(Error::EmptyInput);
    }
    if config.strategies.is_empty() || config.ks.is_empty() {
        return Err(Error::InvalidParam("need at least one strategy and one k".into()));
    }
    if config.timing && config.repeats == 0 {
        return Err(Error::InvalidParam("timing needs at least one repeat".into()));
    }
    let mut ledger = ComputeLedger::default();
    let mut timing = Vec::new();
    for &k in &config.ks {
        for &strategy in &config.strategies {
            let first = run_pass(model, ngram, prompts, strategy, k, config)?;
            ledger.rows.push(LedgerRow {
                strategy,
                k,
                prompts: prompts.len(),
                forwards: first.forwards,
                drafts: first.drafts,
                tokens: first.tokens,
            });
            if !config.timing {
                continue;
            }
            for _ in 0..config.warmup {
                run_pass(model, ngram, prompts, strategy, k, config)?;
            }
            let mut wall = Vec::with_capacity(config.repeats);
            let mut ngram_ms = Vec::with_capacity(config.repeats);
            for _ in 0..config.repeats {
                let t0 = Instant::now();
                let pass = run_pass(model, ngram, prompts, strategy, k, config)?;
                wall.push(t0.elapsed().as_secs_f64() * 1e3);
                ngram_ms.push(pass.ngram_nanos as f64 / 1e6);
            }
            timing.push(TimingRow {
                strategy,
                k,
                median_ms: median(wall),
                ngram_ms: median(ngram_ms),
            });
        }
    }
    Ok(BenchReport {
        ledger,
        timing: config.timing.then_some(timing),
    })
}

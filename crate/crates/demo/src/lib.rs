//! Browser playground: draft completion, draft selection and the linearity
//! probe, all running in-page on the built-in backends.

use serde::Serialize;
use spd_core::decode::{reset, DecodeState, Decoder, Draft, Selection, SpdParams};
use spd_core::lm::{LanguageModel, LinearMockLM, MockConfig, TinyTransformerLM, TransformerConfig};
use spd_core::ngram::{NGramEnsemble, OrderPreset};
use spd_core::probe::{linearity_probe, ProbeTarget};
use spd_core::vocab::Vocab;
use wasm_bindgen::prelude::*;

/// Small English corpus backing the demo's n-gram ensemble.
pub const CORPUS: &str = include_str!("corpus.txt");

fn model(backend: &str, vocab: &Vocab) -> Result<Box<dyn LanguageModel>, String> {
    let v = vocab.size();
    match backend {
        "mock" => Ok(Box::new(LinearMockLM::new(&MockConfig::new(v, 32, 0)).map_err(|e| e.to_string())?)),
        "tiny" => {
            let config = TransformerConfig {
                vocab_size: v,
                dim: 32,
                layers: 2,
                heads: 4,
                context_len: 256,
            };
            Ok(Box::new(TinyTransformerLM::random(config, 0).map_err(|e| e.to_string())?))
        }
        other => Err(format!("unknown backend {other:?}; expected mock or tiny")),
    }
}

fn corpus_docs(vocab: &Vocab) -> Vec<Vec<u32>> {
    CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| vocab.tokenize(l).expect("byte vocabulary covers all text"))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct DraftView {
    pub text: String,
    pub tokens: Vec<u32>,
    pub score: f64,
    pub log_score: f64,
    pub finished: bool,
}

#[derive(Debug, Serialize)]
pub struct Drafts {
    pub drafts: Vec<DraftView>,
    pub forwards_used: u64,
}

#[derive(Debug, Serialize)]
pub struct ProbeCurve {
    pub backend: String,
    pub k: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// One decoding session. Every method is deterministic given the seed.
pub struct Playground {
    vocab: Vocab,
    model: Box<dyn LanguageModel>,
    ngram: Option<NGramEnsemble>,
    params: SpdParams,
    state: Option<DecodeState>,
}

impl Playground {
    /// With the n-gram on, the pool spans the whole vocabulary so corpus
    /// continuations are reachable; `alpha` is the n-gram exponent.
    pub fn new(backend: &str, k: usize, ngram_alpha: Option<f64>, seed: u64) -> Result<Self, String> {
        let vocab = Vocab::bytes();
        let model = model(backend, &vocab)?;
        let ngram = if ngram_alpha.is_some() {
            Some(NGramEnsemble::build(&corpus_docs(&vocab), &OrderPreset::Full.weights(), &vocab).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let mut params = SpdParams {
            k,
            ngram_enabled: ngram_alpha.is_some(),
            seed,
            ..SpdParams::default()
        };
        if let Some(alpha) = ngram_alpha {
            params.smoothing.alpha = alpha;
            params.pool = Some(vocab.size());
        }
        params.validate(vocab.size()).map_err(|e| e.to_string())?;
        Ok(Self {
            vocab,
            model,
            ngram,
            params,
            state: None,
        })
    }

    fn decoder(&self) -> Decoder<'_> {
        Decoder::new(&*self.model, self.ngram.as_ref(), self.params.clone()).expect("parameters validated at construction")
    }

    fn view(&self, drafts: &[Draft], forwards_used: u64) -> Result<Drafts, String> {
        let drafts = drafts
            .iter()
            .map(|d| {
                Ok(DraftView {
                    text: self.vocab.detokenize(&d.tokens).map_err(|e| e.to_string())?,
                    tokens: d.tokens.clone(),
                    score: d.score(),
                    log_score: d.log_score,
                    finished: d.finished,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(Drafts { drafts, forwards_used })
    }

    /// Starts fresh from `prefix` and decodes `steps` superposed steps.
    pub fn complete(&mut self, prefix: &str, steps: usize) -> Result<Drafts, String> {
        if prefix.is_empty() {
            return Err("prefix must be nonempty".into());
        }
        if steps == 0 {
            return Err("steps must be at least 1".into());
        }
        let tokens = self.vocab.tokenize(prefix).map_err(|e| e.to_string())?;
        let decoder = self.decoder();
        let mut state = decoder.start(&tokens).map_err(|e| e.to_string())?;
        decoder.extend(&mut state, steps).map_err(|e| e.to_string())?;
        let out = self.view(state.drafts(), state.forwards_used());
        self.state = Some(state);
        out
    }

    /// Commits draft `index` as the new prefix, then decodes `steps` more.
    pub fn select(&mut self, index: usize, steps: usize) -> Result<Drafts, String> {
        let mut state = self.state.take().ok_or("nothing to select from; complete first")?;
        let before = state.forwards_used();
        let result = reset(&mut state, &*self.model, Selection::Index(index))
            .and_then(|_| self.decoder().extend(&mut state, steps));
        let out = result
            .map_err(|e| e.to_string())
            .and_then(|_| self.view(state.drafts(), state.forwards_used() - before));
        self.state = Some(state);
        out
    }
}

/// Cosine between superposed and mixed logits per timestep. Prefixes are
/// 8-byte windows of the built-in corpus, 4 batches of 4.
pub fn probe_curve(backend: &str, k: usize, timesteps: usize) -> Result<ProbeCurve, String> {
    let vocab = Vocab::bytes();
    let model = model(backend, &vocab)?;
    let text = vocab.tokenize(CORPUS).map_err(|e| e.to_string())?;
    let stride = (text.len() - 8) / 16;
    let batches: Vec<Vec<Vec<u32>>> = (0..4)
        .map(|b| (0..4).map(|i| text[(b * 4 + i) * stride..][..8].to_vec()).collect())
        .collect();
    let report = linearity_probe(&*model, &batches, k, timesteps, ProbeTarget::Logits).map_err(|e| e.to_string())?;
    Ok(ProbeCurve {
        backend: report.backend,
        k,
        mean: report.per_timestep.iter().map(|p| p.0).collect(),
        std: report.per_timestep.iter().map(|p| p.1).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes")).map_err(|e| JsError::new(&e))
}

/// JavaScript handle around a [`Playground`]. Results are JSON strings.
#[wasm_bindgen]
pub struct Demo(Playground);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    /// A negative `alpha` disables the n-gram.
    pub fn new(backend: &str, k: usize, alpha: f64, seed: u32) -> Result<Demo, JsError> {
        let alpha = (alpha >= 0.0).then_some(alpha);
        Playground::new(backend, k, alpha, seed.into()).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn complete(&mut self, prefix: &str, steps: usize) -> Result<String, JsError> {
        to_js(self.0.complete(prefix, steps))
    }

    pub fn select(&mut self, index: usize, steps: usize) -> Result<String, JsError> {
        to_js(self.0.select(index, steps))
    }
}

#[wasm_bindgen]
pub fn probe(backend: &str, k: usize, timesteps: usize) -> Result<String, JsError> {
    to_js(probe_curve(backend, k, timesteps))
}

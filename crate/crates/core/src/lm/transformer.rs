use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::{self, NamedTensor};
use super::tensor::{axpy, dot, Matrix};
use super::{check_inputs, check_token, Embedding, ForwardCounter, LanguageModel, Logits};
use crate::error::{Error, Result};
use crate::TokenId;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub context_len: usize,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.dim == 0 || self.heads == 0 || self.context_len == 0 {
            return Err(Error::InvalidParam("transformer dimensions must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidParam(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Block {
    ln1_g: Vec<f64>,
    ln1_b: Vec<f64>,
    qkv: Matrix,
    qkv_b: Vec<f64>,
    attn_out: Matrix,
    attn_out_b: Vec<f64>,
    ln2_g: Vec<f64>,
    ln2_b: Vec<f64>,
    fc: Matrix,
    fc_b: Vec<f64>,
    proj: Matrix,
    proj_b: Vec<f64>,
}

/// Pre-norm decoder-only transformer with learned positions and GELU MLPs.
#[derive(Debug)]
pub struct TinyTransformerLM {
    config: TransformerConfig,
    tok_emb: Matrix,
    pos_emb: Matrix,
    blocks: Vec<Block>,
    lnf_g: Vec<f64>,
    lnf_b: Vec<f64>,
    head: Matrix,
    counter: ForwardCounter,
}

enum Init {
    Normal(f64),
    Ones,
    Zeros,
}

fn param_specs(c: &TransformerConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = c.dim;
    let inv = 1.0 / (d as f64).sqrt();
    let mut specs = vec![
        ("tok_emb".to_string(), vec![c.vocab_size, d], Init::Normal(1.0)),
        ("pos_emb".to_string(), vec![c.context_len, d], Init::Normal(0.1)),
    ];
    for l in 0..c.layers {
        let p = |s: &str| format!("blocks.{l}.{s}");
        specs.extend([
            (p("ln1.g"), vec![d], Init::Ones),
            (p("ln1.b"), vec![d], Init::Zeros),
            (p("attn.qkv"), vec![3 * d, d], Init::Normal(inv)),
            (p("attn.qkv_b"), vec![3 * d], Init::Zeros),
            (p("attn.out"), vec![d, d], Init::Normal(inv)),
            (p("attn.out_b"), vec![d], Init::Zeros),
            (p("ln2.g"), vec![d], Init::Ones),
            (p("ln2.b"), vec![d], Init::Zeros),
            (p("mlp.fc"), vec![4 * d, d], Init::Normal(inv)),
            (p("mlp.fc_b"), vec![4 * d], Init::Zeros),
            (p("mlp.proj"), vec![d, 4 * d], Init::Normal(0.5 * inv)),
            (p("mlp.proj_b"), vec![d], Init::Zeros),
        ]);
    }
    specs.extend([
        ("ln_f.g".to_string(), vec![d], Init::Ones),
        ("ln_f.b".to_string(), vec![d], Init::Zeros),
        ("head".to_string(), vec![c.vocab_size, d], Init::Normal(2.0 * inv)),
    ]);
    specs
}

impl TinyTransformerLM {
    /// Randomly initialized weights. Values are drawn as f32 so a saved and
    /// reloaded model behaves bit-identically.
    pub fn random(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = HashMap::new();
        for (name, shape, init) in param_specs(&config) {
            let numel = shape.iter().product();
            let data: Vec<f32> = match init {
                Init::Normal(std) => {
                    let n = Normal::new(0.0, std).expect("positive std");
                    (0..numel).map(|_| n.sample(&mut rng) as f32).collect()
                }
                Init::Ones => vec![1.0; numel],
                Init::Zeros => vec![0.0; numel],
            };
            tensors.insert(name.clone(), NamedTensor { name, shape, data });
        }
        Self::from_tensors(config, tensors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (config, tensors) = checkpoint::read(path.as_ref())?;
        config.validate()?;
        Self::from_tensors(config, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write(path.as_ref(), &self.config, &self.named_tensors())
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    fn from_tensors(config: TransformerConfig, mut tensors: HashMap<String, NamedTensor>) -> Result<Self> {
        let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::Malformed(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(Error::Malformed(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(t.data.into_iter().map(f64::from).collect())
        };
        let d = config.dim;
        let v = config.vocab_size;
        let tok_emb = Matrix::from_vec(v, d, take("tok_emb", &[v, d])?);
        let pos_emb = Matrix::from_vec(config.context_len, d, take("pos_emb", &[config.context_len, d])?);
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            blocks.push(Block {
                ln1_g: take(&p("ln1.g"), &[d])?,
                ln1_b: take(&p("ln1.b"), &[d])?,
                qkv: Matrix::from_vec(3 * d, d, take(&p("attn.qkv"), &[3 * d, d])?),
                qkv_b: take(&p("attn.qkv_b"), &[3 * d])?,
                attn_out: Matrix::from_vec(d, d, take(&p("attn.out"), &[d, d])?),
                attn_out_b: take(&p("attn.out_b"), &[d])?,
                ln2_g: take(&p("ln2.g"), &[d])?,
                ln2_b: take(&p("ln2.b"), &[d])?,
                fc: Matrix::from_vec(4 * d, d, take(&p("mlp.fc"), &[4 * d, d])?),
                fc_b: take(&p("mlp.fc_b"), &[4 * d])?,
                proj: Matrix::from_vec(d, 4 * d, take(&p("mlp.proj"), &[d, 4 * d])?),
                proj_b: take(&p("mlp.proj_b"), &[d])?,
            });
        }
        let lnf_g = take("ln_f.g", &[d])?;
        let lnf_b = take("ln_f.b", &[d])?;
        let head = Matrix::from_vec(v, d, take("head", &[v, d])?);
        Ok(Self {
            config,
            tok_emb,
            pos_emb,
            blocks,
            lnf_g,
            lnf_b,
            head,
            counter: ForwardCounter::default(),
        })
    }

    fn named_tensors(&self) -> Vec<NamedTensor> {
        let c = &self.config;
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, data: &[f64]| {
            out.push(NamedTensor {
                name,
                shape,
                data: data.iter().map(|&x| x as f32).collect(),
            })
        };
        let d = c.dim;
        push("tok_emb".into(), vec![c.vocab_size, d], self.tok_emb.data());
        push("pos_emb".into(), vec![c.context_len, d], self.pos_emb.data());
        for (l, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            push(p("ln1.g"), vec![d], &b.ln1_g);
            push(p("ln1.b"), vec![d], &b.ln1_b);
            push(p("attn.qkv"), vec![3 * d, d], b.qkv.data());
            push(p("attn.qkv_b"), vec![3 * d], &b.qkv_b);
            push(p("attn.out"), vec![d, d], b.attn_out.data());
            push(p("attn.out_b"), vec![d], &b.attn_out_b);
            push(p("ln2.g"), vec![d], &b.ln2_g);
            push(p("ln2.b"), vec![d], &b.ln2_b);
            push(p("mlp.fc"), vec![4 * d, d], b.fc.data());
            push(p("mlp.fc_b"), vec![4 * d], &b.fc_b);
            push(p("mlp.proj"), vec![d, 4 * d], b.proj.data());
            push(p("mlp.proj_b"), vec![d], &b.proj_b);
        }
        push("ln_f.g".into(), vec![d], &self.lnf_g);
        push("ln_f.b".into(), vec![d], &self.lnf_b);
        push("head".into(), vec![c.vocab_size, d], self.head.data());
        out
    }

    /// Residual stream at every position, after each block. Returns the final
    /// stream and the last-position state of every block.
    fn run(&self, inputs: &[Embedding]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.config.dim;
        let heads = self.config.heads;
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut xs: Vec<Vec<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(t, e)| e.as_slice().iter().zip(self.pos_emb.row(t)).map(|(a, b)| a + b).collect())
            .collect();
        let mut per_block = Vec::with_capacity(self.blocks.len());

        for b in &self.blocks {
            let qkv: Vec<Vec<f64>> = xs
                .iter()
                .map(|x| {
                    let mut o = b.qkv.matvec(&layer_norm(x, &b.ln1_g, &b.ln1_b));
                    o.iter_mut().zip(&b.qkv_b).for_each(|(a, c)| *a += c);
                    o
                })
                .collect();
            for t in 0..xs.len() {
                let mut attn = vec![0.0; d];
                for h in 0..heads {
                    let q = &qkv[t][h * hd..(h + 1) * hd];
                    let scores: Vec<f64> = (0..=t)
                        .map(|s| dot(q, &qkv[s][d + h * hd..d + (h + 1) * hd]) * scale)
                        .collect();
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let z: f64 = w.iter().sum();
                    for (s, ws) in w.iter().enumerate() {
                        axpy(
                            &mut attn[h * hd..(h + 1) * hd],
                            ws / z,
                            &qkv[s][2 * d + h * hd..2 * d + (h + 1) * hd],
                        );
                    }
                }
                let out = b.attn_out.matvec(&attn);
                for ((x, o), bias) in xs[t].iter_mut().zip(&out).zip(&b.attn_out_b) {
                    *x += o + bias;
                }
            }
            for x in xs.iter_mut() {
                let mut hidden = b.fc.matvec(&layer_norm(x, &b.ln2_g, &b.ln2_b));
                hidden
                    .iter_mut()
                    .zip(&b.fc_b)
                    .for_each(|(a, c)| *a = gelu(*a + c));
                let out = b.proj.matvec(&hidden);
                for ((xi, o), bias) in x.iter_mut().zip(&out).zip(&b.proj_b) {
                    *xi += o + bias;
                }
            }
            per_block.push(xs.last().expect("nonempty input").clone());
        }
        (xs, per_block)
    }
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(g.iter().zip(b))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect()
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

impl LanguageModel for TinyTransformerLM {
    fn name(&self) -> &str {
        "tiny"
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn context_len(&self) -> Option<usize> {
        Some(self.config.context_len)
    }

    fn embed(&self, id: TokenId) -> Result<Embedding> {
        check_token(id, self.vocab_size())?;
        Ok(Embedding(self.tok_emb.row(id as usize).to_vec()))
    }

    fn forward(&self, inputs: &[Embedding]) -> Result<Logits> {
        check_inputs(inputs, self.dim(), self.context_len())?;
        self.counter.bump();
        let (xs, _) = self.run(inputs);
        let last = layer_norm(xs.last().expect("checked nonempty"), &self.lnf_g, &self.lnf_b);
        Ok(Logits(self.head.matvec(&last)))
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }

    fn forward_hidden(&self, inputs: &[Embedding]) -> Result<Option<Vec<Vec<f64>>>> {
        check_inputs(inputs, self.dim(), self.context_len())?;
        self.counter.bump();
        Ok(Some(self.run(inputs).1))
    }
}

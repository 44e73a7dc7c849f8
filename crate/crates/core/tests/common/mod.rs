//! Reference implementations shared by the integration tests. They read the
//! mock's matrices directly and share no code with the decoder.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_core::lm::{LanguageModel, LinearMockLM};

pub type Seq = Vec<u32>;

fn mat_vec(m: &spd_core::lm::tensor::Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) * x[j]).sum())
        .collect()
}

fn embedding(m: &LinearMockLM, t: u32) -> Vec<f64> {
    let e = m.embedding_matrix();
    (0..e.cols()).map(|j| e.get(t as usize, j)).collect()
}

/// Hidden state after consuming `inputs`, starting from `h`.
fn feed(m: &LinearMockLM, mut h: Vec<f64>, inputs: &[Vec<f64>]) -> Vec<f64> {
    for x in inputs {
        h = mat_vec(m.transition(), &h);
        for (a, b) in h.iter_mut().zip(x) {
            *a += b;
        }
    }
    h
}

pub fn softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Keeps the `pool` most probable entries (lower id first on ties), zeroing the rest.
pub fn restrict(p: &[f64], pool: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; p.len()];
    for &i in idx.iter().take(pool) {
        out[i] = p[i];
    }
    out
}

pub struct BeamResult {
    /// Generated tokens and linear-space score, best first.
    pub beams: Vec<(Seq, f64)>,
    /// Step-restricted shared distribution at each position.
    pub dists: Vec<Vec<f64>>,
}

/// Beam search over the single distribution produced by feeding the
/// score-weighted mix of beam tokens back into the mock.
pub fn shared_beam(m: &LinearMockLM, prefix: &[u32], k: usize, pool: usize, steps: usize, tau: f64) -> BeamResult {
    let prefix_inputs: Vec<Vec<f64>> = prefix.iter().map(|&t| embedding(m, t)).collect();
    let mut h = feed(m, m.initial_state().to_vec(), &prefix_inputs);
    let mut dists = Vec::new();

    let p = softmax(&mat_vec(m.output_matrix(), &h), tau);
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut beams: Vec<(Seq, f64)> = order[..k].iter().map(|&t| (vec![t as u32], p[t])).collect();
    dists.push(restrict(&p, k));

    for _ in 1..steps {
        let total: f64 = beams.iter().map(|b| b.1).sum();
        let mut x = vec![0.0; m.dim()];
        for (seq, s) in &beams {
            let e = embedding(m, *seq.last().unwrap());
            for (a, b) in x.iter_mut().zip(e) {
                *a += s / total * b;
            }
        }
        h = feed(m, h, &[x]);
        let p = restrict(&softmax(&mat_vec(m.output_matrix(), &h), tau), pool);
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, (_, s)) in beams.iter().enumerate() {
            for (t, &q) in p.iter().enumerate() {
                if q > 0.0 {
                    cands.push((s * q, i, t));
                }
            }
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        beams = cands[..k]
            .iter()
            .map(|&(s, i, t)| {
                let mut seq = beams[i].0.clone();
                seq.push(t as u32);
                (seq, s)
            })
            .collect();
        dists.push(p);
    }
    BeamResult { beams, dists }
}

/// Top `k` of all `V^G` sequences ranked by the product of fixed per-step
/// distributions.
pub fn exhaustive(dists: &[Vec<f64>], k: usize) -> Vec<(Seq, f64)> {
    let v = dists[0].len();
    let g = dists.len();
    let mut all = Vec::with_capacity(v.pow(g as u32));
    let mut seq = vec![0usize; g];
    loop {
        let score: f64 = seq.iter().zip(dists).map(|(&t, d)| d[t]).product();
        if score > 0.0 {
            all.push((seq.iter().map(|&t| t as u32).collect::<Seq>(), score));
        }
        let mut i = g;
        loop {
            if i == 0 {
                all.sort_by(|a: &(Seq, f64), b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                all.truncate(k);
                return all;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < v {
                break;
            }
            seq[i] = 0;
        }
    }
}

/// Conventional beam search where each beam runs its own forward pass.
pub fn per_beam(m: &LinearMockLM, prefix: &[u32], k: usize, steps: usize, tau: f64) -> Vec<Seq> {
    let mut beams: Vec<(Seq, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..steps {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, (seq, s)) in beams.iter().enumerate() {
            let inputs: Vec<Vec<f64>> = prefix.iter().chain(seq).map(|&t| embedding(m, t)).collect();
            let h = feed(m, m.initial_state().to_vec(), &inputs);
            let p = softmax(&mat_vec(m.output_matrix(), &h), tau);
            for (t, q) in p.into_iter().enumerate() {
                cands.push((s * q, i, t));
            }
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        beams = cands[..k]
            .iter()
            .map(|&(s, i, t)| {
                let mut seq = beams[i].0.clone();
                seq.push(t as u32);
                (seq, s)
            })
            .collect();
    }
    beams.into_iter().map(|b| b.0).collect()
}

/// Argmax chain using raw logits, lowest id on ties.
pub fn greedy(model: &dyn LanguageModel, prefix: &[u32], steps: usize) -> Seq {
    let mut tokens = prefix.to_vec();
    for _ in 0..steps {
        let inputs: Vec<_> = tokens.iter().map(|&t| model.embed(t).unwrap()).collect();
        let logits = model.forward(&inputs).unwrap();
        let mut best = 0;
        for (i, &l) in logits.as_slice().iter().enumerate() {
            if l > logits.as_slice()[best] {
                best = i;
            }
        }
        tokens.push(best as u32);
    }
    tokens
}

pub fn random_prefix(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Seq {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(0..vocab as u32)).collect()
}

/// Documents over a small alphabet so that n-grams repeat.
pub fn random_corpus(seed: u64, alphabet: u32, max_tokens: usize) -> Vec<Seq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut total = 0;
    while total < max_tokens {
        let len = rng.random_range(1..=60).min(max_tokens - total);
        docs.push((0..len).map(|_| rng.random_range(0..alphabet)).collect::<Seq>());
        total += len;
    }
    docs
}

/// Every contiguous n-gram in every document, counted naively.
pub fn recount(corpus: &[Seq], n: usize) -> HashMap<Seq, u64> {
    let mut out = HashMap::new();
    for doc in corpus {
        if doc.len() < n {
            continue;
        }
        for i in 0..=doc.len() - n {
            *out.entry(doc[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    out
}

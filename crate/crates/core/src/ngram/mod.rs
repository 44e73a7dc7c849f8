//! Count-based n-gram models, their linear interpolation, and the smoothing
//! that blends an n-gram distribution into the language model's.

mod smooth;
mod spng;

use std::collections::BTreeMap;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::vocab::Vocab;
use crate::TokenId;

pub use smooth::{smooth, SmoothingParams};
pub use spng::{SPNG_MAGIC, SPNG_VERSION};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 6;

/// Interpolation weights for orders 2 through 6.
pub const DEFAULT_WEIGHTS: [(usize, f64); 5] = [(2, 0.01), (3, 0.04), (4, 0.15), (5, 0.18), (6, 0.12)];

/// Named order ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPreset {
    /// Orders 2..=6.
    Full,
    /// Orders 2..=4, same per-order weights.
    Compact,
}

impl OrderPreset {
    pub fn weights(self) -> Vec<(usize, f64)> {
        let max = match self {
            OrderPreset::Full => 6,
            OrderPreset::Compact => 4,
        };
        DEFAULT_WEIGHTS.iter().copied().filter(|&(n, _)| n <= max).collect()
    }
}

/// Default weight for order `n`, or `None` outside `[2, 6]`.
pub fn default_weight(n: usize) -> Option<f64> {
    DEFAULT_WEIGHTS.iter().find(|&&(o, _)| o == n).map(|&(_, w)| w)
}

/// Frequency table for one order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramStore {
    n: usize,
    counts: BTreeMap<Vec<TokenId>, u64>,
    context_totals: BTreeMap<Vec<TokenId>, u64>,
}

impl NGramStore {
    pub fn new(n: usize) -> Result<Self> {
        check_order(n)?;
        Ok(Self {
            n,
            counts: BTreeMap::new(),
            context_totals: BTreeMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Number of distinct n-grams.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, ngram: &[TokenId]) -> u64 {
        self.counts.get(ngram).copied().unwrap_or(0)
    }

    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.context_totals.get(context).copied().unwrap_or(0)
    }

    /// All `(n-gram, count)` entries in lexicographic key order.
    pub fn entries(&self) -> impl Iterator<Item = (&[TokenId], u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    /// Counts every window of one document. Windows never span documents.
    pub fn add_document(&mut self, doc: &[TokenId]) {
        for w in doc.windows(self.n) {
            self.insert(w, 1);
        }
    }

    pub(crate) fn insert(&mut self, ngram: &[TokenId], count: u64) {
        *self.counts.entry(ngram.to_vec()).or_insert(0) += count;
        *self
            .context_totals
            .entry(ngram[..self.n - 1].to_vec())
            .or_insert(0) += count;
    }

    /// Conditional next-token distribution given the last `n-1` tokens of
    /// `context`. Empty when the context is unseen or too short.
    pub fn cond_dist(&self, context: &[TokenId]) -> Distribution {
        let k = self.n - 1;
        if context.len() < k {
            return Distribution::new();
        }
        let ctx = &context[context.len() - k..];
        let total = match self.context_totals.get(ctx) {
            Some(&t) => t as f64,
            None => return Distribution::new(),
        };
        let mut lo = ctx.to_vec();
        lo.push(0);
        let mut hi = ctx.to_vec();
        hi.push(TokenId::MAX);
        self.counts
            .range(lo..=hi)
            .map(|(key, &c)| (key[k], c as f64 / total))
            .collect()
    }
}

fn check_order(n: usize) -> Result<()> {
    if (MIN_ORDER..=MAX_ORDER).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!(
            "n-gram order {n} outside [{MIN_ORDER}, {MAX_ORDER}]"
        )))
    }
}

/// A set of n-gram stores with one interpolation weight each.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramEnsemble {
    vocab_hash: u64,
    stores: Vec<(NGramStore, f64)>,
}

impl NGramEnsemble {
    /// Ensemble with no orders.
    pub fn empty(vocab: &Vocab) -> Self {
        Self {
            vocab_hash: vocab.hash(),
            stores: Vec::new(),
        }
    }

    /// Counts every order in `weights` over the documents of `corpus`.
    pub fn build(corpus: &[Vec<TokenId>], weights: &[(usize, f64)], vocab: &Vocab) -> Result<Self> {
        if corpus.iter().all(|d| d.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        if let Some(&id) = corpus.iter().flatten().find(|&&t| t as usize >= vocab.size()) {
            return Err(Error::OutOfVocabulary {
                id,
                size: vocab.size(),
            });
        }
        let mut ens = Self::empty(vocab);
        for &(n, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParam(format!("weight for order {n} must be >= 0")));
            }
            if ens.stores.iter().any(|(s, _)| s.n == n) {
                return Err(Error::InvalidParam(format!("order {n} listed twice")));
            }
            let mut store = NGramStore::new(n)?;
            for doc in corpus {
                store.add_document(doc);
            }
            ens.stores.push((store, w));
        }
        ens.stores.sort_by_key(|(s, _)| s.n);
        Ok(ens)
    }

    pub(crate) fn from_parts(vocab_hash: u64, stores: Vec<(NGramStore, f64)>) -> Self {
        Self { vocab_hash, stores }
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    /// `(store, weight)` pairs, ascending by order.
    pub fn stores(&self) -> &[(NGramStore, f64)] {
        &self.stores
    }

    pub fn orders(&self) -> Vec<usize> {
        self.stores.iter().map(|(s, _)| s.n).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.stores.iter().map(|&(_, w)| w).sum()
    }

    /// Weighted sum of the per-order conditionals. Orders whose context is
    /// unseen or too short contribute nothing; weights are used as given.
    pub fn interpolated_dist(&self, context: &[TokenId]) -> Distribution {
        let mut out = Distribution::new();
        for (store, w) in &self.stores {
            if *w == 0.0 {
                continue;
            }
            for (t, p) in store.cond_dist(context).iter() {
                out.add(t, w * p);
            }
        }
        out
    }
}

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;

use crate::TokenId;

/// Sparse token distribution. Entries are strictly positive; smoothed
/// distributions may carry less than unit mass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Distribution {
    entries: BTreeMap<TokenId, f64>,
}

/// Orders `(token, prob)` pairs by probability descending, then token id ascending.
pub(crate) fn rank_order(a: &(TokenId, f64), b: &(TokenId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl Distribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from pairs; non-positive masses are dropped and duplicates accumulate.
    pub fn from_pairs<I: IntoIterator<Item = (TokenId, f64)>>(pairs: I) -> Self {
        let mut d = Self::new();
        for (t, p) in pairs {
            d.add(t, p);
        }
        d
    }

    pub fn add(&mut self, token: TokenId, mass: f64) {
        if mass > 0.0 {
            *self.entries.entry(token).or_insert(0.0) += mass;
        }
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.entries.get(&token).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.entries.contains_key(&token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates in token id order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.entries.iter().map(|(&t, &p)| (t, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Entries sorted by probability descending, ties by lower token id.
    pub fn ranked(&self) -> Vec<(TokenId, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(rank_order);
        v
    }

    pub fn argmax(&self) -> Option<TokenId> {
        self.iter().min_by(rank_order).map(|(t, _)| t)
    }

    /// Keeps the `n` most probable entries without renormalizing.
    pub fn top(&self, n: usize) -> Distribution {
        Self::from_pairs(self.ranked().into_iter().take(n))
    }

    pub fn renormalized(&self) -> Distribution {
        let total = self.total_mass();
        Self::from_pairs(self.iter().map(|(t, p)| (t, p / total)))
    }

    /// Smallest probability-sorted prefix whose cumulative mass reaches `p`,
    /// renormalized. The boundary token is included.
    pub fn nucleus(&self, p: f64) -> Distribution {
        let mut kept = Vec::new();
        let mut cum = 0.0;
        for (t, q) in self.ranked() {
            kept.push((t, q));
            cum += q;
            if cum >= p {
                break;
            }
        }
        Self::from_pairs(kept).renormalized()
    }

    /// Draws a token proportionally to mass (need not be normalized).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<TokenId> {
        if self.is_empty() {
            return None;
        }
        let total = self.total_mass();
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for (t, p) in self.iter() {
            if u < p {
                return Some(t);
            }
            u -= p;
            last = Some(t);
        }
        last
    }
}

impl FromIterator<(TokenId, f64)> for Distribution {
    fn from_iter<I: IntoIterator<Item = (TokenId, f64)>>(iter: I) -> Self {
        Self::from_pairs(iter)
    }
}

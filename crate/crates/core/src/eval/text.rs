use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

fn ngram_counts<T: Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Sentence BLEU-4 of `candidate` against `references`: uniform weights,
/// counts clipped by the maximum reference count, brevity penalty against the
/// closest reference length (shorter on ties). A zero match count for an
/// order with `c` candidate n-grams contributes `1/(c+1)`; an order with no
/// candidate n-grams contributes 1.
pub fn bleu<T: Hash + Eq + Clone>(candidate: &[T], references: &[&[T]]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            continue;
        }
        let refs: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| {
                let max_ref = refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        let p = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_sum / 4.0).exp()
}

/// Mean BLEU of each draft against the other drafts.
pub fn self_bleu<T: Hash + Eq + Clone>(drafts: &[Vec<T>]) -> Result<f64> {
    if drafts.len() < 2 {
        return Err(Error::InvalidParam("self-BLEU needs at least two drafts".into()));
    }
    if drafts.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput);
    }
    let total: f64 = (0..drafts.len())
        .map(|i| {
            let refs: Vec<&[T]> = drafts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, d)| d.as_slice())
                .collect();
            bleu(&drafts[i], &refs)
        })
        .sum();
    Ok(total / drafts.len() as f64)
}

/// Distinct n-grams over total n-gram windows.
pub fn ngram_uniqueness<T: Hash + Eq>(tokens: &[T], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    if tokens.len() < n {
        return Err(Error::InvalidParam(format!("sequence of {} shorter than n = {n}", tokens.len())));
    }
    let windows = tokens.len() - n + 1;
    let distinct: HashSet<&[T]> = tokens.windows(n).collect();
    Ok(distinct.len() as f64 / windows as f64)
}

/// Lowercases, strips punctuation, collapses whitespace and drops one leading
/// article. Returns the remaining words.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let mut words: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if matches!(words.first().map(String::as_str), Some("a" | "an" | "the")) {
        words.remove(0);
    }
    words
}

/// True when the normalized alias occurs as a contiguous run of words in the
/// normalized draft.
pub fn contains_answer(draft: &str, alias: &str) -> bool {
    let alias = normalize_answer(alias);
    if alias.is_empty() {
        return false;
    }
    let draft = normalize_answer(draft);
    draft.windows(alias.len()).any(|w| w == alias.as_slice())
}

/// `P@k'` for every `k'` up to the number of drafts: whether any of the first
/// `k'` drafts contains one of the aliases.
pub fn precision_at_k<S: AsRef<str>, A: AsRef<str>>(drafts: &[S], aliases: &[A]) -> Vec<bool> {
    let mut hit = false;
    drafts
        .iter()
        .map(|d| {
            hit = hit || aliases.iter().any(|a| contains_answer(d.as_ref(), a.as_ref()));
            hit
        })
        .collect()
}

//! Step log: one JSON line per decoding step, enough to recompute every
//! draft score from scratch.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Plain forward over the prefix; drafts seeded with the top tokens.
    First,
    /// Superposed step.
    Step,
    /// Collapse onto one draft, which becomes the new prefix.
    Reset,
}

/// One surviving draft after a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    /// Index of the draft this one extends; absent on first steps.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parent: Option<usize>,
    /// Appended token; absent for carried finished drafts and resets.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token: Option<TokenId>,
    /// Probability multiplied into the score; absent when the score is carried.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub kind: StepKind,
    pub choices: Vec<Choice>,
}

pub fn write_jsonl<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Malformed(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed(format!("step log: {e}")))?);
    }
    Ok(out)
}

/// Recomputes the log-space draft scores after the last record by summing
/// the logged probabilities along each lineage.
pub fn replay(records: &[StepRecord]) -> Result<Vec<f64>> {
    let mut scores: Vec<f64> = Vec::new();
    let bad = |step: usize, what: &str| Error::Malformed(format!("step {step}: {what}"));
    for r in records {
        scores = match r.kind {
            StepKind::First => r
                .choices
                .iter()
                .map(|c| c.p_f.map(f64::ln).ok_or_else(|| bad(r.step, "first-step choice without p_f")))
                .collect::<Result<_>>()?,
            StepKind::Reset => vec![0.0],
            StepKind::Step => r
                .choices
                .iter()
                .map(|c| {
                    let parent = c
                        .parent
                        .and_then(|i| scores.get(i).copied())
                        .ok_or_else(|| bad(r.step, "missing or unknown parent"))?;
                    Ok(match c.p_f {
                        Some(p) => parent + p.ln(),
                        None => parent,
                    })
                })
                .collect::<Result<_>>()?,
        };
    }
    Ok(scores)
}

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::text::precision_at_k;
use crate::decode::{baseline_generate, ns_spd_generate, BaselineParams, SpdParams, SpliceParams, Strategy};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::ngram::NGramEnsemble;
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub prompt: String,
    pub aliases: Vec<String>,
}

pub fn read_qa_jsonl<R: BufRead>(input: R) -> Result<Vec<QaItem>> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QaItem =
            serde_json::from_str(&line).map_err(|e| Error::Malformed(format!("QA line {}: {e}", i + 1)))?;
        if item.aliases.is_empty() {
            return Err(Error::Malformed(format!("QA line {}: no aliases", i + 1)));
        }
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageStrategy {
    Ns,
    NsSpd,
}

impl CoverageStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageStrategy::Ns => "ns",
            CoverageStrategy::NsSpd => "ns_spd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    /// `k` drafts per nucleus draft and total positions `steps`.
    pub spd: SpdParams,
    pub top_p: f64,
    pub nucleus_temperature: f64,
    /// Nucleus positions before the splice; defaults to half the steps.
    pub split: Option<usize>,
}

impl CoverageConfig {
    pub fn split(&self) -> usize {
        self.split.unwrap_or(self.spd.steps / 2)
    }
}

/// Generated continuations for one item under one strategy and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub item: usize,
    pub strategy: CoverageStrategy,
    pub budget: usize,
    pub forwards: u64,
    pub drafts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub strategy: CoverageStrategy,
    pub budget: usize,
    /// Drafts per item.
    pub drafts: usize,
    /// Forward passes per item.
    pub forwards: u64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub dump: Vec<DumpRecord>,
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,budget,drafts,forwards,coverage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                r.strategy.as_str(),
                r.budget,
                r.drafts,
                r.forwards,
                r.coverage
            ));
        }
        out
    }

    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.dump {
            let line = serde_json::to_string(r).map_err(|e| Error::Malformed(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Coverage at each forward budget `n`: nucleus sampling draws `n` drafts,
/// the splice draws `n·k` drafts for the same `n·steps` forwards.
pub fn coverage_curve(
    model: &dyn LanguageModel,
    ngram: Option<&NGramEnsemble>,
    vocab: &Vocab,
    items: &[QaItem],
    budgets: &[usize],
    config: &CoverageConfig,
) -> Result<CoverageReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(Error::InvalidParam("budgets must be positive".into()));
    }
    let steps = config.spd.steps;
    let mut dump = Vec::new();
    for &budget in budgets {
        for (i, item) in items.iter().enumerate() {
            let prompt = vocab.tokenize(&item.prompt)?;
            if prompt.is_empty() {
                return Err(Error::EmptyInput);
            }
            let seed = config.spd.seed.wrapping_add(i as u64);
            let text = |tokens: &[u32]| vocab.detokenize(&tokens[prompt.len()..]);

            let ns = baseline_generate(
                &prompt,
                model,
                &BaselineParams {
                    strategy: Strategy::Nucleus { p: config.top_p },
                    num_drafts: budget,
                    steps,
                    temperature: config.nucleus_temperature,
                    seed,
                    stop_id: config.spd.stop_id,
                },
            )?;
            dump.push(DumpRecord {
                item: i,
                strategy: CoverageStrategy::Ns,
                budget,
                forwards: ns.forwards_used,
                drafts: ns.drafts.iter().map(|d| text(&d.tokens)).collect::<Result<_>>()?,
            });

            let spliced = ns_spd_generate(
                &prompt,
                model,
                ngram,
                &SpliceParams {
                    nucleus_drafts: budget,
                    top_p: config.top_p,
                    nucleus_temperature: config.nucleus_temperature,
                    split: config.split(),
                    spd: SpdParams {
                        seed,
                        ..config.spd.clone()
                    },
                },
            )?;
            dump.push(DumpRecord {
                item: i,
                strategy: CoverageStrategy::NsSpd,
                budget,
                forwards: spliced.forwards_used,
                drafts: spliced.drafts().map(|d| text(&d.tokens)).collect::<Result<_>>()?,
            });
        }
    }
    let rows = coverage_from_dump(&dump, items)?;
    Ok(CoverageReport { rows, dump })
}

/// Recomputes coverage rows from raw draft text.
pub fn coverage_from_dump(dump: &[DumpRecord], items: &[QaItem]) -> Result<Vec<CoverageRow>> {
    let mut rows: Vec<CoverageRow> = Vec::new();
    let mut hits: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for rec in dump {
        let item = items.get(rec.item).ok_or(Error::IndexOutOfRange {
            index: rec.item,
            len: items.len(),
        })?;
        let pos = match rows.iter().position(|r| r.strategy == rec.strategy && r.budget == rec.budget) {
            Some(p) => p,
            None => {
                rows.push(CoverageRow {
                    strategy: rec.strategy,
                    budget: rec.budget,
                    drafts: rec.drafts.len(),
                    forwards: rec.forwards,
                    coverage: 0.0,
                });
                hits.push(0);
                counts.push(0);
                rows.len() - 1
            }
        };
        if precision_at_k(&rec.drafts, &item.aliases).last() == Some(&true) {
            hits[pos] += 1;
        }
        counts[pos] += 1;
    }
    for (r, (h, c)) in rows.iter_mut().zip(hits.into_iter().zip(counts)) {
        r.coverage = h as f64 / c as f64;
    }
    Ok(rows)
}

/// Coverage when only the first `j` drafts of each record are kept, for
/// every `j`. Nondecreasing by construction.
pub fn retained_curve(dump: &[DumpRecord], items: &[QaItem], strategy: CoverageStrategy, budget: usize) -> Vec<f64> {
    let recs: Vec<_> = dump
        .iter()
        .filter(|r| r.strategy == strategy && r.budget == budget)
        .collect();
    let width = recs.iter().map(|r| r.drafts.len()).max().unwrap_or(0);
    let mut hits = vec![0usize; width];
    for r in &recs {
        let p = precision_at_k(&r.drafts, &items[r.item].aliases);
        for (j, h) in hits.iter_mut().enumerate() {
            if p.get(j.min(p.len().saturating_sub(1))).copied().unwrap_or(false) {
                *h += 1;
            }
        }
    }
    hits.into_iter().map(|h| h as f64 / recs.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{Decoder, Draft};
    use crate::lm::{LinearMockLM, MockConfig};

    fn setup() -> (LinearMockLM, Vocab, CoverageConfig) {
        let vocab = Vocab::bytes();
        let m = LinearMockLM::new(&MockConfig::new(vocab.size(), 16, 1)).unwrap();
        let cfg = CoverageConfig {
            spd: SpdParams {
                k: 3,
                steps: 6,
                ngram_enabled: false,
                temperature: 1.0,
                seed: 5,
                ..SpdParams::default()
            },
            top_p: 0.9,
            nucleus_temperature: 1.0,
            split: None,
        };
        (m, vocab, cfg)
    }

    #[test]
    fn budgets_share_forward_counts() {
        let (m, vocab, cfg) = setup();
        let items = vec![
            QaItem { prompt: "q: ab".into(), aliases: vec!["zz".into()] },
            QaItem { prompt: "q: cd".into(), aliases: vec!["x".into()] },
        ];
        let r = coverage_curve(&m, None, &vocab, &items, &[1, 3], &cfg).unwrap();
        assert_eq!(r.rows.len(), 4);
        for pair in r.rows.chunks(2) {
            assert_eq!(pair[0].forwards, pair[1].forwards);
            assert_eq!(pair[0].forwards, pair[0].budget as u64 * 6);
            assert_eq!(pair[1].drafts, pair[0].drafts * 3);
        }
        assert_eq!(coverage_from_dump(&r.dump, &items).unwrap(), r.rows);
        let curve = retained_curve(&r.dump, &items, CoverageStrategy::NsSpd, 3);
        assert_eq!(curve.len(), 9);
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn greedy_answer_is_covered() {
        let vocab = Vocab::words(["the", "capital", "is", "paris", "rome", "lima", "oslo", "bern"]).unwrap();
        let m = LinearMockLM::new(&MockConfig::new(vocab.size(), 8, 3)).unwrap();
        let (_, _, cfg) = setup();
        let prompt = "the capital is";
        let ids = vocab.tokenize(prompt).unwrap();
        let greedy = Decoder::new(&m, None, SpdParams { k: 1, ..cfg.spd.clone() })
            .unwrap()
            .generate(&ids)
            .unwrap();
        let Draft { tokens, .. } = &greedy.drafts()[0];
        // Greedy through the first superposed position, which both strategies reproduce.
        let end = ids.len() + cfg.split() + 1;
        let answer = vocab.detokenize(&tokens[ids.len()..end]).unwrap();
        let item = QaItem { prompt: prompt.into(), aliases: vec![answer] };
        // A vanishing nucleus collapses to the argmax chain.
        let cfg = CoverageConfig { top_p: 1e-12, ..cfg };
        let r = coverage_curve(&m, None, &vocab, &[item], &[1], &cfg).unwrap();
        assert!(r.rows.iter().all(|r| r.coverage == 1.0), "{:?}", r.rows);
    }

    #[test]
    fn qa_jsonl() {
        let text = "{\"prompt\":\"Q\",\"aliases\":[\"a\",\"b\"]}\n\n{\"prompt\":\"R\",\"aliases\":[\"c\"]}\n";
        let items = read_qa_jsonl(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        assert!(read_qa_jsonl("{\"prompt\":\"Q\",\"aliases\":[]}".as_bytes()).is_err());
        assert!(read_qa_jsonl("nope".as_bytes()).is_err());
    }
}

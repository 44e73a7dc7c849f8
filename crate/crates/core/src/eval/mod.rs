//! Metrics and compute accounting.

mod bench;
mod coverage;
mod perplexity;
mod text;

use serde::Serialize;

use crate::error::{Error, Result};

pub use bench::{bench_forwards, BenchConfig, BenchReport, BenchStrategy, ComputeLedger, LedgerRow, TimingRow};
pub use coverage::{
    coverage_curve, coverage_from_dump, read_qa_jsonl, retained_curve, CoverageConfig, CoverageReport, CoverageRow,
    CoverageStrategy, DumpRecord, QaItem,
};
pub use perplexity::{perplexity, Perplexity};
pub use text::{bleu, contains_answer, ngram_uniqueness, normalize_answer, precision_at_k, self_bleu};

/// A named metric aggregated over samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    /// Sample standard deviation; absent for a single sample.
    pub stddev: Option<f64>,
    pub samples: usize,
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn from_samples(name: impl Into<String>, samples: &[f64], config: serde_json::Value) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParam("metric samples must be finite".into()));
        }
        let (value, std) = crate::probe::mean_std(samples);
        Ok(Self {
            name: name.into(),
            value,
            stddev: (samples.len() > 1).then_some(std),
            samples: samples.len(),
            config,
        })
    }

    pub fn csv_header() -> &'static str {
        "metric,value,stddev,samples"
    }

    pub fn csv_row(&self) -> String {
        let std = self.stddev.map(|s| format!("{s:.6}")).unwrap_or_default();
        format!("{},{:.6},{std},{}", self.name, self.value, self.samples)
    }
}

use std::fs;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use spd_core::decode::{baseline_generate, write_jsonl, BaselineParams, Decoder, Draft, SpdParams, Strategy};
use spd_core::eval::{
    bench_forwards, coverage_curve, ngram_uniqueness, perplexity, precision_at_k, read_qa_jsonl, self_bleu,
    BenchConfig, BenchStrategy, CoverageConfig, MetricReport,
};
use spd_core::lm::{LanguageModel, TinyTransformerLM, TransformerConfig};
use spd_core::ngram::{default_weight, NGramEnsemble, SmoothingParams};
use spd_core::probe::{linearity_probe, ProbeTarget};
use spd_core::vocab::{Vocab, VocabMode};
use spd_core::TokenId;

use crate::backend::{load_backend, load_ngram, load_vocab, tiny_config};
use crate::error::{AppError, Result};
use crate::server::{self, BusyPolicy, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "spd", version, about = "Multi-draft text completion with superposed decoding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count n-grams in a corpus (one document per line) and write an SPNG store
    BuildNgram(BuildNgramArgs),
    /// Generate drafts for one prefix
    Decode(DecodeArgs),
    /// Compare forward-pass counts of superposed decoding and baselines
    Bench(BenchArgs),
    /// Quality and coverage metrics
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Measure how linearly a backend responds to superposed inputs
    Probe(ProbeArgs),
    /// Run the HTTP session service
    Serve(ServeArgs),
    /// Write a randomly initialized transformer checkpoint
    InitModel(InitModelArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// mock, tiny or splm:<path>
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Word vocabulary file, one token per line; bytes when omitted
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpdArgs {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Tokens kept from the shared distribution per step (default k)
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long, default_value_t = SmoothingParams::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = SmoothingParams::default().delta)]
    pub delta: f64,
    #[arg(long, default_value_t = SpdParams::default().temperature)]
    pub tau: f64,
    #[arg(long)]
    pub reset_every: Option<usize>,
    /// SPNG store; n-gram rescoring is off without one
    #[arg(long)]
    pub ngram: Option<PathBuf>,
    /// Stop token, as a vocabulary string
    #[arg(long)]
    pub stop: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SpdArgs {
    fn params(&self, vocab: &Vocab) -> Result<SpdParams> {
        let stop_id = match &self.stop {
            Some(s) => Some(
                vocab
                    .id_of(s)
                    .ok_or_else(|| AppError::Usage(format!("stop token `{s}` not in vocabulary")))?,
            ),
            None => None,
        };
        Ok(SpdParams {
            k: self.k,
            pool: self.pool,
            steps: self.steps,
            smoothing: SmoothingParams {
                alpha: self.alpha,
                delta: self.delta,
            },
            temperature: self.tau,
            reset_every: self.reset_every,
            ngram_enabled: self.ngram.is_some(),
            stop_id,
            seed: self.seed,
        })
    }

    fn ngram(&self, vocab: &Vocab) -> Result<Option<NGramEnsemble>> {
        self.ngram.as_deref().map(|p| load_ngram(p, vocab)).transpose()
    }
}

#[derive(Debug, Args)]
pub struct BuildNgramArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Range such as 2-4 or a list such as 2,3,5
    #[arg(long, default_value = "2-6")]
    pub orders: String,
    /// Interpolation weights, one per order; defaults to the tuned weights
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeStrategy {
    Spd,
    Greedy,
    Beam,
    Topk,
    Nucleus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub spd: SpdArgs,
    #[arg(long)]
    pub prefix: String,
    #[arg(long, value_enum, default_value_t = DecodeStrategy::Spd)]
    pub strategy: DecodeStrategy,
    /// Nucleus mass for --strategy nucleus
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    /// Candidate count for --strategy topk
    #[arg(long, default_value_t = 40)]
    pub top_k: usize,
    /// Write the step log (JSON lines) for superposed decoding
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "mock")]
    pub backend: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,8")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Any of spd, nucleus, topk, beam
    #[arg(long, value_delimiter = ',', default_value = "spd,nucleus,beam")]
    pub strategies: Vec<String>,
    /// Prompts, one per line; a small built-in set when omitted
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub ngram: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add wall-clock and n-gram lookup columns (not reproducible)
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Also write the CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Coverage of a QA set under nucleus sampling and the nucleus splice
    Coverage(CoverageArgs),
    /// Precision@k of superposed drafts on a QA set
    Precision(PrecisionArgs),
    /// Perplexity, Self-BLEU and n-gram uniqueness of superposed drafts
    Drafts(DraftsArgs),
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub spd: SpdArgs,
    /// JSON lines of {"prompt", "aliases"}
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub budgets: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nucleus_tau: f64,
    /// Nucleus positions before the splice (default steps / 2)
    #[arg(long)]
    pub split: Option<usize>,
    /// Write every generated draft as JSON lines
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct PrecisionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub spd: SpdArgs,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct DraftsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub spd: SpdArgs,
    /// Prompts, one per line
    #[arg(long)]
    pub prompts: PathBuf,
    /// Backend that scores perplexity (defaults to --backend)
    #[arg(long)]
    pub eval_backend: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 10)]
    pub batches: usize,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 8)]
    pub prefix_len: usize,
    /// Compare the hidden state after this block instead of the logits
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnBusy {
    Wait,
    Reject,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overridden by SPD_PORT
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Serve files from this directory for non-API paths
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OnBusy::Wait)]
    pub on_busy: OnBusy,
    #[arg(long, default_value_t = 15)]
    pub idle_minutes: u64,
    /// Seed for session ids
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InitModelArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::BuildNgram(a) => build_ngram(a, out),
        Command::Decode(a) => decode(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Eval(EvalCommand::Coverage(a)) => eval_coverage(a, out),
        Command::Eval(EvalCommand::Precision(a)) => eval_precision(a, out),
        Command::Eval(EvalCommand::Drafts(a)) => eval_drafts(a, out),
        Command::Probe(a) => probe(a, out),
        Command::Serve(a) => serve(a, out),
        Command::InitModel(a) => init_model(a, out),
    }
}

fn io_out(e: std::io::Error) -> AppError {
    AppError::File {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(AppError::file(path))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(AppError::file(path))
}

pub fn parse_orders(spec: &str) -> Result<Vec<usize>> {
    let bad = || AppError::Usage(format!("invalid --orders `{spec}`; use a range like 2-4 or a list like 2,3,5"));
    if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn build_ngram(a: BuildNgramArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let orders = parse_orders(&a.orders)?;
    let weights: Vec<(usize, f64)> = match &a.weights {
        Some(w) if w.len() != orders.len() => {
            return Err(AppError::Usage(format!("{} weights given for {} orders", w.len(), orders.len())))
        }
        Some(w) => orders.iter().copied().zip(w.iter().copied()).collect(),
        None => orders
            .iter()
            .map(|&n| {
                default_weight(n)
                    .map(|w| (n, w))
                    .ok_or_else(|| AppError::Usage(format!("no default weight for order {n}")))
            })
            .collect::<Result<_>>()?,
    };
    let corpus: Vec<Vec<TokenId>> = read_lines(&a.corpus)?
        .iter()
        .map(|l| vocab.tokenize(l))
        .collect::<spd_core::Result<_>>()?;
    let ens = NGramEnsemble::build(&corpus, &weights, &vocab)?;
    ens.save(&a.out).map_err(|e| match e {
        spd_core::Error::Io(source) => AppError::File { path: a.out.clone(), source },
        e => e.into(),
    })?;
    writeln!(out, "order,weight,entries").map_err(io_out)?;
    for (store, w) in ens.stores() {
        writeln!(out, "{},{w},{}", store.order(), store.len()).map_err(io_out)?;
    }
    writeln!(out, "documents,{}", corpus.len()).map_err(io_out)?;
    writeln!(out, "vocab_hash,{:#018x}", ens.vocab_hash()).map_err(io_out)?;
    Ok(())
}

fn draft_json(vocab: &Vocab, d: &Draft) -> Result<serde_json::Value> {
    Ok(json!({
        "text": vocab.detokenize(&d.tokens)?,
        "tokens": d.tokens,
        "score": d.score(),
        "log_score": d.log_score,
        "finished": d.finished,
    }))
}

fn print_drafts(
    out: &mut dyn Write,
    vocab: &Vocab,
    drafts: &[Draft],
    forwards: u64,
    format: OutputFormat,
) -> Result<()> {
    match format {
        OutputFormat::Json => {
            let drafts = drafts.iter().map(|d| draft_json(vocab, d)).collect::<Result<Vec<_>>>()?;
            let doc = json!({ "drafts": drafts, "forwards_used": forwards });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).unwrap()).map_err(io_out)?;
        }
        OutputFormat::Text => {
            for (i, d) in drafts.iter().enumerate() {
                writeln!(out, "{}\t{:.6e}\t{:?}", i + 1, d.score(), vocab.detokenize(&d.tokens)?).map_err(io_out)?;
            }
            writeln!(out, "forwards_used\t{forwards}").map_err(io_out)?;
        }
    }
    Ok(())
}

fn decode(a: DecodeArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.model.vocab.as_deref())?;
    let model = load_backend(&a.model.backend, &vocab)?;
    let prefix = vocab.tokenize(&a.prefix)?;
    if a.strategy == DecodeStrategy::Spd {
        let ngram = a.spd.ngram(&vocab)?;
        let state = Decoder::new(&*model, ngram.as_ref(), a.spd.params(&vocab)?)?.generate(&prefix)?;
        if let Some(path) = &a.log {
            let mut buf = Vec::new();
            write_jsonl(state.step_log(), &mut buf)?;
            write_file(path, &buf)?;
        }
        return print_drafts(out, &vocab, state.drafts(), state.forwards_used(), a.format);
    }
    if a.log.is_some() {
        return Err(AppError::Usage("--log is only available for --strategy spd".into()));
    }
    let strategy = match a.strategy {
        DecodeStrategy::Greedy => Strategy::Greedy,
        DecodeStrategy::Beam => Strategy::Beam { width: a.spd.k },
        DecodeStrategy::Topk => Strategy::TopK { k: a.top_k },
        DecodeStrategy::Nucleus => Strategy::Nucleus { p: a.top_p },
        DecodeStrategy::Spd => unreachable!(),
    };
    let params = BaselineParams {
        strategy,
        num_drafts: a.spd.k,
        steps: a.spd.steps,
        temperature: 1.0,
        seed: a.spd.seed,
        stop_id: a.spd.params(&vocab)?.stop_id,
    };
    let result = baseline_generate(&prefix, &*model, &params)?;
    print_drafts(out, &vocab, &result.drafts, result.forwards_used, a.format)
}

const BENCH_PROMPTS: [&str; 4] = [
    "The quick brown fox",
    "Once upon a time",
    "def main():",
    "In the beginning",
];

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let model = load_backend(&a.backend, &vocab)?;
    let ngram = a.ngram.as_deref().map(|p| load_ngram(p, &vocab)).transpose()?;
    let texts = match &a.prompts {
        Some(p) => read_lines(p)?,
        None => BENCH_PROMPTS.iter().map(|s| s.to_string()).collect(),
    };
    let prompts = texts
        .iter()
        .map(|t| vocab.tokenize(t))
        .collect::<spd_core::Result<Vec<_>>>()?;
    let strategies = a
        .strategies
        .iter()
        .map(|s| BenchStrategy::parse(s).ok_or_else(|| AppError::Usage(format!("unknown strategy `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let config = BenchConfig {
        strategies,
        ks: a.k,
        spd: SpdParams {
            steps: a.steps,
            ngram_enabled: ngram.is_some(),
            seed: a.seed,
            ..SpdParams::default()
        },
        top_p: 0.9,
        top_k: 40,
        warmup: a.warmup,
        repeats: a.repeats,
        timing: a.timing,
    };
    let report = bench_forwards(&*model, ngram.as_ref(), &prompts, &config)?;
    let csv = report.to_csv();
    out.write_all(csv.as_bytes()).map_err(io_out)?;
    if let Some(path) = &a.out {
        write_file(path, csv.as_bytes())?;
    }
    Ok(())
}

fn load_qa(path: &Path) -> Result<Vec<spd_core::eval::QaItem>> {
    let file = fs::File::open(path).map_err(AppError::file(path))?;
    read_qa_jsonl(BufReader::new(file)).map_err(|e| match e {
        spd_core::Error::Io(source) => AppError::File { path: path.into(), source },
        e => e.into(),
    })
}

fn print_metrics(out: &mut dyn Write, reports: &[MetricReport], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(reports).unwrap()).map_err(io_out)?;
        }
        OutputFormat::Text => {
            writeln!(out, "{}", MetricReport::csv_header()).map_err(io_out)?;
            for r in reports {
                writeln!(out, "{}", r.csv_row()).map_err(io_out)?;
            }
        }
    }
    Ok(())
}

fn eval_coverage(a: CoverageArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.model.vocab.as_deref())?;
    let model = load_backend(&a.model.backend, &vocab)?;
    let ngram = a.spd.ngram(&vocab)?;
    let items = load_qa(&a.qa)?;
    let config = CoverageConfig {
        spd: a.spd.params(&vocab)?,
        top_p: a.top_p,
        nucleus_temperature: a.nucleus_tau,
        split: a.split,
    };
    let report = coverage_curve(&*model, ngram.as_ref(), &vocab, &items, &a.budgets, &config)?;
    if let Some(path) = &a.dump {
        let mut buf = Vec::new();
        report.write_dump(&mut buf)?;
        write_file(path, &buf)?;
    }
    match a.format {
        OutputFormat::Text => out.write_all(report.to_csv().as_bytes()).map_err(io_out)?,
        OutputFormat::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&report.rows).unwrap()).map_err(io_out)?
        }
    }
    Ok(())
}

fn continuation(vocab: &Vocab, d: &Draft, prompt_len: usize) -> Result<String> {
    Ok(vocab.detokenize(&d.tokens[prompt_len..])?)
}

fn eval_precision(a: PrecisionArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.model.vocab.as_deref())?;
    let model = load_backend(&a.model.backend, &vocab)?;
    let ngram = a.spd.ngram(&vocab)?;
    let items = load_qa(&a.qa)?;
    let params = a.spd.params(&vocab)?;
    let decoder = Decoder::new(&*model, ngram.as_ref(), params.clone())?;
    let mut hits = vec![Vec::with_capacity(items.len()); params.k];
    for item in &items {
        let prompt = vocab.tokenize(&item.prompt)?;
        let state = decoder.generate(&prompt)?;
        let texts = state
            .drafts()
            .iter()
            .map(|d| continuation(&vocab, d, prompt.len()))
            .collect::<Result<Vec<_>>>()?;
        let p = precision_at_k(&texts, &item.aliases);
        for (j, h) in hits.iter_mut().enumerate() {
            let got = p.get(j).or(p.last()).copied().unwrap_or(false);
            h.push(if got { 1.0 } else { 0.0 });
        }
    }
    let config = json!({ "backend": a.model.backend, "k": params.k, "steps": params.steps, "seed": params.seed });
    let reports = hits
        .iter()
        .enumerate()
        .map(|(j, h)| MetricReport::from_samples(format!("p@{}", j + 1), h, config.clone()))
        .collect::<spd_core::Result<Vec<_>>>()?;
    print_metrics(out, &reports, a.format)
}

fn eval_drafts(a: DraftsArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.model.vocab.as_deref())?;
    let model = load_backend(&a.model.backend, &vocab)?;
    let scorer: std::sync::Arc<dyn LanguageModel> = match &a.eval_backend {
        Some(b) => load_backend(b, &vocab)?,
        None => model.clone(),
    };
    let ngram = a.spd.ngram(&vocab)?;
    let params = a.spd.params(&vocab)?;
    let decoder = Decoder::new(&*model, ngram.as_ref(), params.clone())?;
    let mut best_ppl = Vec::new();
    let mut mean_ppl = Vec::new();
    let mut bleu = Vec::new();
    let mut uniq = [Vec::new(), Vec::new(), Vec::new()];
    for line in read_lines(&a.prompts)? {
        let prompt = vocab.tokenize(&line)?;
        if prompt.is_empty() {
            continue;
        }
        let state = decoder.generate(&prompt)?;
        let mut ppls = Vec::new();
        let mut generated = Vec::new();
        for d in state.drafts() {
            if d.tokens.len() == prompt.len() {
                continue;
            }
            ppls.push(perplexity(&*scorer, &d.tokens, prompt.len()..d.tokens.len())?.value);
            let g = d.tokens[prompt.len()..].to_vec();
            for (n, u) in uniq.iter_mut().enumerate() {
                if g.len() > n {
                    u.push(ngram_uniqueness(&g, n + 1)?);
                }
            }
            generated.push(g);
        }
        if ppls.is_empty() {
            continue;
        }
        best_ppl.push(ppls.iter().cloned().fold(f64::INFINITY, f64::min));
        mean_ppl.push(ppls.iter().sum::<f64>() / ppls.len() as f64);
        if generated.len() >= 2 {
            bleu.push(self_bleu(&generated)?);
        }
    }
    let config = json!({
        "backend": a.model.backend,
        "eval_backend": a.eval_backend.as_deref().unwrap_or(&a.model.backend),
        "k": params.k,
        "steps": params.steps,
        "seed": params.seed,
    });
    let mut reports = Vec::new();
    for (name, xs) in [
        ("perplexity_best", &best_ppl),
        ("perplexity_mean", &mean_ppl),
        ("self_bleu", &bleu),
        ("unique_1", &uniq[0]),
        ("unique_2", &uniq[1]),
        ("unique_3", &uniq[2]),
    ] {
        let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        if !finite.is_empty() {
            reports.push(MetricReport::from_samples(name, &finite, config.clone())?);
        }
    }
    if reports.is_empty() {
        return Err(spd_core::Error::EmptyInput.into());
    }
    print_metrics(out, &reports, a.format)
}

/// Random prefixes; printable ASCII for byte vocabularies.
fn probe_prefixes(vocab: &Vocab, a: &ProbeArgs) -> Vec<Vec<Vec<TokenId>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (lo, hi) = match vocab.mode() {
        VocabMode::Byte => (32, 127),
        VocabMode::Word => (0, vocab.size() as TokenId),
    };
    (0..a.batches)
        .map(|_| {
            (0..a.batch_size)
                .map(|_| (0..a.prefix_len).map(|_| rng.random_range(lo..hi)).collect())
                .collect()
        })
        .collect()
}

fn probe(a: ProbeArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.model.vocab.as_deref())?;
    let model = load_backend(&a.model.backend, &vocab)?;
    if a.prefix_len == 0 {
        return Err(AppError::Usage("--prefix-len must be at least 1".into()));
    }
    let target = a.layer.map_or(ProbeTarget::Logits, ProbeTarget::Layer);
    let report = linearity_probe(&*model, &probe_prefixes(&vocab, &a), a.k, a.timesteps, target)?;
    let csv = report.to_csv();
    out.write_all(csv.as_bytes()).map_err(io_out)?;
    if let Some(path) = &a.out {
        write_file(path, csv.as_bytes())?;
    }
    Ok(())
}

fn serve(a: ServeArgs, _out: &mut dyn Write) -> Result<()> {
    let port = match std::env::var("SPD_PORT") {
        Ok(p) => p
            .parse()
            .map_err(|_| AppError::Usage(format!("SPD_PORT `{p}` is not a port number")))?,
        Err(_) => a.port,
    };
    let addr: SocketAddr = format!("{}:{port}", a.host)
        .parse()
        .map_err(|_| AppError::Usage(format!("invalid host `{}`", a.host)))?;
    let mut config = ServerConfig::new(load_vocab(a.vocab.as_deref())?);
    config.busy = match a.on_busy {
        OnBusy::Wait => BusyPolicy::Wait,
        OnBusy::Reject => BusyPolicy::Reject,
    };
    config.idle_timeout = Duration::from_secs(a.idle_minutes * 60);
    config.seed = a.seed;
    config.static_dir = a.static_dir;
    let runtime = tokio::runtime::Runtime::new().map_err(AppError::file("<runtime>"))?;
    runtime
        .block_on(server::serve(config, addr))
        .map_err(AppError::file(addr.to_string()))
}

fn init_model(a: InitModelArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let base = tiny_config(vocab.size());
    let config = TransformerConfig {
        vocab_size: vocab.size(),
        dim: a.dim.unwrap_or(base.dim),
        layers: a.layers.unwrap_or(base.layers),
        heads: a.heads.unwrap_or(base.heads),
        context_len: a.context.unwrap_or(base.context_len),
    };
    let model = TinyTransformerLM::random(config.clone(), a.seed)?;
    model.save(&a.out).map_err(|e| match e {
        spd_core::Error::Io(source) => AppError::File { path: a.out.clone(), source },
        e => e.into(),
    })?;
    writeln!(out, "{}", serde_json::to_string(&config).unwrap()).map_err(io_out)?;
    Ok(())
}

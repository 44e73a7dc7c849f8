//! Acceptance criteria, one PASS/FAIL line each. Runs without the test
//! harness so the report prints in order; exits nonzero on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_app::backend::load_backend;
use spd_core::decode::{ns_spd_generate, replay, spd_generate, superposition_weights, Decoder, SpdParams, SpliceParams};
use spd_core::eval::{
    bench_forwards, coverage_curve, ngram_uniqueness, perplexity, precision_at_k, retained_curve, self_bleu,
    BenchConfig, BenchStrategy, CoverageConfig, CoverageStrategy, QaItem,
};
use spd_core::lm::tensor::Matrix;
use spd_core::lm::{LinearMockLM, MockConfig};
use spd_core::ngram::{smooth, NGramEnsemble, OrderPreset, SmoothingParams};
use spd_core::probe::{linearity_probe, ProbeTarget};
use spd_core::vocab::Vocab;
use spd_core::Distribution;

type Outcome = Result<String, String>;
type Criterion = (&'static str, f64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn plain(k: usize, pool: Option<usize>, steps: usize, temperature: f64) -> SpdParams {
    SpdParams {
        k,
        pool,
        steps,
        temperature,
        ngram_enabled: false,
        ..SpdParams::default()
    }
}

fn greedy_degeneration() -> Outcome {
    let vocab = Vocab::bytes();
    let mut checked = 0;
    for backend in ["mock", "tiny"] {
        let model = load_backend(backend, &vocab).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..200u64 {
            let prefix = common::random_prefix(&mut rng, vocab.size(), 12);
            let params = SpdParams {
                k: 1,
                ngram_enabled: false,
                seed,
                ..SpdParams::default()
            };
            let state = spd_generate(&prefix, &*model, None, &params).map_err(|e| e.to_string())?;
            let want = common::greedy(&*model, &prefix, 10);
            ensure!(state.drafts()[0].tokens == want, "{backend} seed {seed}: tokens differ from greedy");
            checked += 1;
        }
    }
    Ok(format!("{checked}/400 prefixes token-identical (mock, tiny; G=10)"))
}

fn beam_oracle() -> Outcome {
    let mut runs = 0;
    let mut worst = 0.0f64;
    let mut per_beam_agree = 0;
    for seed in 0..100u64 {
        let v = 8 + (seed as usize * 7) % 25;
        let m = LinearMockLM::new(&MockConfig::new(v, 8, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prefix = common::random_prefix(&mut rng, v, 6);
        for k in [2, 3] {
            let pool = if seed % 2 == 0 { None } else { Some((2 * k).min(v)) };
            let state = spd_generate(&prefix, &m, None, &plain(k, pool, 10, 1.0)).map_err(|e| e.to_string())?;
            let oracle = common::shared_beam(&m, &prefix, k, pool.unwrap_or(k), 10, 1.0);
            for (d, (seq, score)) in state.drafts().iter().zip(&oracle.beams) {
                ensure!(&d.tokens[prefix.len()..] == seq.as_slice(), "seed {seed} k {k}: sequences differ");
                worst = worst.max((d.score() - score).abs());
            }
            let per_beam = common::per_beam(&m, &prefix, k, 10, 1.0);
            if state.drafts().iter().zip(&per_beam).all(|(d, s)| &d.tokens[prefix.len()..] == s.as_slice()) {
                per_beam_agree += 1;
            }
            runs += 1;
        }
    }
    ensure!(worst <= 1e-9, "score error {worst:e} above 1e-9");
    let mut exhaustive = 0;
    for seed in 0..10u64 {
        let m = LinearMockLM::new(&MockConfig::new(12, 8, 1000 + seed)).unwrap();
        let prefix = [seed as u32 % 12, 3];
        for k in [2, 3] {
            let state = spd_generate(&prefix, &m, None, &plain(k, None, 4, 1.0)).map_err(|e| e.to_string())?;
            let oracle = common::shared_beam(&m, &prefix, k, k, 4, 1.0);
            let best = common::exhaustive(&oracle.dists, k);
            for (d, (seq, score)) in state.drafts().iter().zip(&best) {
                ensure!(&d.tokens[prefix.len()..] == seq.as_slice(), "exhaustive seed {seed} k {k}: sequences differ");
                ensure!((d.score() - score).abs() <= 1e-9, "exhaustive seed {seed} k {k}: score differs");
            }
            exhaustive += 1;
        }
    }
    Ok(format!(
        "{runs} runs exact, max score error {worst:.1e}; {exhaustive} exhaustive 12^4 checks exact; \
         per-beam search agrees on {per_beam_agree}/{runs} (informational)"
    ))
}

fn compute_contract() -> Outcome {
    let vocab = Vocab::bytes();
    let model = load_backend("mock", &vocab).map_err(|e| e.to_string())?;
    let prompts: Vec<_> = ["alpha", "beta gamma", "delta"].iter().map(|p| vocab.tokenize(p).unwrap()).collect();
    let config = BenchConfig {
        strategies: vec![BenchStrategy::Spd, BenchStrategy::Nucleus, BenchStrategy::TopK, BenchStrategy::Beam],
        ks: vec![1, 3, 8],
        spd: plain(3, None, 10, 0.06),
        top_p: 0.9,
        top_k: 40,
        warmup: 0,
        repeats: 1,
        timing: false,
    };
    let report = bench_forwards(&*model, None, &prompts, &config).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for k in [1, 3, 8] {
        let spd = report.ledger.forwards(BenchStrategy::Spd, k).unwrap();
        ensure!(spd == 10 * prompts.len() as u64, "k={k}: SPD used {spd} forwards");
        for s in [BenchStrategy::Nucleus, BenchStrategy::TopK, BenchStrategy::Beam] {
            let r = report.ledger.ratio(s, k).unwrap();
            ensure!(r == k as f64, "k={k} {}: ratio {r}", s.as_str());
        }
        seen.push(format!("k={k}:{}", report.ledger.ratio(BenchStrategy::Nucleus, k).unwrap()));
    }
    Ok(format!("baseline/SPD forward ratio {}", seen.join(" ")))
}

fn linearity() -> Outcome {
    let m = LinearMockLM::new(&MockConfig::new(64, 16, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batches: Vec<Vec<Vec<u32>>> = (0..10)
        .map(|_| (0..10).map(|_| common::random_prefix(&mut rng, 64, 8)).collect())
        .collect();
    let r = linearity_probe(&m, &batches, 3, 20, ProbeTarget::Logits).map_err(|e| e.to_string())?;
    ensure!(r.per_timestep.len() == 20, "report has {} timesteps", r.per_timestep.len());
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for (mean, std) in &r.per_timestep {
        worst_mean = worst_mean.max((mean - 1.0).abs());
        worst_std = worst_std.max(*std);
    }
    ensure!(worst_mean <= 1e-9 && worst_std <= 1e-9, "mean error {worst_mean:e}, std {worst_std:e}");
    Ok(format!("T=20, k=3: max |mean-1| {worst_mean:.1e}, max std {worst_std:.1e}"))
}

fn ngram_exactness() -> Outcome {
    let vocab = Vocab::bytes_plain();
    let mut contexts = 0;
    let mut grams = 0;
    for seed in 0..50u64 {
        let alphabet = 3 + (seed as u32 % 20);
        let size = 500 + (seed as usize * 197) % 9500;
        let corpus = common::random_corpus(seed, alphabet, size);
        ensure!(corpus.iter().map(Vec::len).sum::<usize>() <= 10_000, "corpus too large");
        let ens = NGramEnsemble::build(&corpus, &OrderPreset::Full.weights(), &vocab).map_err(|e| e.to_string())?;
        for (store, _) in ens.stores() {
            let want = common::recount(&corpus, store.order());
            ensure!(store.len() == want.len(), "seed {seed} n={}: {} entries, recount {}", store.order(), store.len(), want.len());
            for (gram, c) in store.entries() {
                ensure!(want.get(gram) == Some(&c), "seed {seed}: count mismatch for {gram:?}");
                grams += 1;
            }
            let mut seen = std::collections::BTreeSet::new();
            for (gram, _) in store.entries() {
                let ctx = &gram[..gram.len() - 1];
                if seen.insert(ctx.to_vec()) {
                    let mass = store.cond_dist(ctx).total_mass();
                    ensure!((mass - 1.0).abs() <= 1e-12, "seed {seed}: context mass {mass}");
                    contexts += 1;
                }
            }
        }
        let bytes = ens.to_bytes();
        let back = NGramEnsemble::from_bytes(&bytes, &vocab).map_err(|e| e.to_string())?;
        ensure!(back == ens && back.to_bytes() == bytes, "seed {seed}: SPNG round trip differs");
    }
    Ok(format!("50 corpora: {grams} counts exact, {contexts} contexts sum to 1, SPNG bit-exact"))
}

fn random_dist(rng: &mut ChaCha8Rng, ids: std::ops::Range<u32>) -> Distribution {
    let n = rng.random_range(1..=8usize);
    let raw: Vec<(u32, f64)> = (0..n)
        .map(|_| (rng.random_range(ids.clone()), rng.random_range(0.01..1.0)))
        .collect();
    let d = Distribution::from_pairs(raw);
    let total = d.total_mass();
    d.iter().map(|(t, p)| (t, p / total)).collect()
}

fn smoothing_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lm = random_dist(&mut rng, 0..12);
        let same_support: Distribution = lm.iter().map(|(t, _)| (t, rng.random_range(0.01..1.0))).collect();
        let ng = random_dist(&mut rng, 0..12);
        let disjoint = random_dist(&mut rng, 100..120);
        let alpha = rng.random_range(0.0..1.0);
        let delta = rng.random_range(0.01..1.0);

        let a0 = smooth(&lm, &same_support, SmoothingParams { alpha: 0.0, delta }).unwrap();
        ensure!(a0.len() == lm.len(), "alpha=0 changed the support");
        for (t, p) in lm.iter() {
            worst = worst.max((a0.get(t) - p).abs());
        }

        let a1 = smooth(&lm, &ng, SmoothingParams { alpha: 1.0, delta }).unwrap();
        let overlap: Vec<u32> = lm.iter().map(|(t, _)| t).filter(|&t| ng.contains(t)).collect();
        if !overlap.is_empty() {
            ensure!(a1.len() == overlap.len(), "alpha=1 support is not the intersection");
            for t in overlap {
                worst = worst.max((a1.get(t) - ng.get(t)).abs());
            }
        }

        let dj = smooth(&lm, &disjoint, SmoothingParams { alpha, delta }).unwrap();
        ensure!(dj.len() == lm.len(), "disjoint branch changed the support");
        for (t, p) in lm.iter() {
            worst = worst.max((dj.get(t) - delta * p.powf(1.0 - alpha)).abs());
        }
    }
    ensure!(worst <= 1e-12, "max error {worst:e}");
    Ok(format!("1000 pairs, max error {worst:.1e}"))
}

fn superposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=16);
        let logs: Vec<f64> = (0..k).map(|_| rng.random_range(-60.0..0.0)).collect();
        worst_sum = worst_sum.max((superposition_weights(&logs).iter().sum::<f64>() - 1.0).abs());
    }
    ensure!(worst_sum <= 1e-12, "weights sum off by {worst_sum:e}");
    for k in 1..=16 {
        let g = superposition_weights(&vec![-3.7; k]);
        ensure!(g.iter().all(|&w| w == 1.0 / k as f64), "equal scores not exactly 1/{k}");
    }
    let m = LinearMockLM::new(&MockConfig::new(24, 8, 9)).unwrap();
    let dec = Decoder::new(&m, None, plain(3, Some(6), 10, 1.0)).unwrap();
    for seed in 0..100u64 {
        let mut a = dec.start(&[seed as u32 % 24, 5]).unwrap();
        dec.extend(&mut a, 1 + seed as usize % 6).unwrap();
        let mut b = a.clone();
        b.scale_scores(rng.random_range(-20.0..20.0));
        dec.advance(&mut a).unwrap();
        dec.advance(&mut b).unwrap();
        let ta: Vec<_> = a.drafts().iter().map(|d| &d.tokens).collect();
        let tb: Vec<_> = b.drafts().iter().map(|d| &d.tokens).collect();
        ensure!(ta == tb, "seed {seed}: selection changed under rescaling");
    }
    Ok(format!("sum error {worst_sum:.1e}; 1/k exact for k<=16; 100 rescaled steps select identically"))
}

fn corpus_ngram(vocab: &Vocab) -> NGramEnsemble {
    let docs: Vec<Vec<u32>> = [
        "the cat sat on the mat",
        "the dog sat on the log",
        "a cat and a dog met on the road",
        "the end of the road is near",
    ]
    .iter()
    .map(|s| vocab.tokenize(s).unwrap())
    .collect();
    NGramEnsemble::build(&docs, &OrderPreset::Full.weights(), vocab).unwrap()
}

fn score_bookkeeping() -> Outcome {
    let vocab = Vocab::bytes();
    let ngram = corpus_ngram(&vocab);
    let model = load_backend("mock", &vocab).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let params = SpdParams {
            k: 3,
            steps: 10,
            pool: Some(3 + seed as usize % 30),
            reset_every: (seed % 3 == 0).then_some(4),
            ngram_enabled: seed % 4 != 1,
            temperature: if seed % 2 == 0 { 0.06 } else { 1.0 },
            seed,
            ..SpdParams::default()
        };
        let ng = params.ngram_enabled.then_some(&ngram);
        let prefix = vocab.tokenize(["the ", "a c", "on th", "road"][seed as usize % 4]).unwrap();
        let state = spd_generate(&prefix, &*model, ng, &params).map_err(|e| e.to_string())?;
        let scores = replay(state.step_log()).map_err(|e| e.to_string())?;
        ensure!(scores.len() == state.drafts().len(), "seed {seed}: replay has {} drafts", scores.len());
        for (d, s) in state.drafts().iter().zip(scores) {
            worst = worst.max((d.log_score - s).abs());
        }
    }
    ensure!(worst <= 1e-12, "max replay error {worst:e}");
    Ok(format!("100 runs, max log-score replay error {worst:.1e}"))
}

fn normalize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let kept: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut words: Vec<String> = kept.split_whitespace().map(String::from).collect();
    if let Some(first) = words.first() {
        if first == "a" || first == "an" || first == "the" {
            words.remove(0);
        }
    }
    words
}

fn hit(draft: &str, alias: &str) -> bool {
    let (d, a) = (normalize(draft), normalize(alias));
    !a.is_empty() && d.len() >= a.len() && (0..=d.len() - a.len()).any(|i| d[i..i + a.len()] == a[..])
}

fn toy_qa(vocab_words: &[&str], n: usize, seed: u64) -> Vec<QaItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let prompt: Vec<&str> = (0..3).map(|_| vocab_words[rng.random_range(0..vocab_words.len())]).collect();
            let aliases = (0..2).map(|_| vocab_words[rng.random_range(0..vocab_words.len())].to_string()).collect();
            QaItem { prompt: prompt.join(" "), aliases }
        })
        .collect()
}

const WORDS: [&str; 16] = [
    "paris", "rome", "lima", "oslo", "bern", "cairo", "quito", "riga", "what", "is", "capital", "of", "france", "italy",
    "peru", "norway",
];

fn ns_spd_accounting() -> Outcome {
    let vocab = Vocab::words(WORDS).unwrap();
    let m = LinearMockLM::new(&MockConfig::new(vocab.size(), 12, 21)).unwrap();
    let spd = plain(3, None, 10, 1.0);
    for n in 2..=5 {
        let out = ns_spd_generate(
            &[8, 9],
            &m,
            None,
            &SpliceParams {
                nucleus_drafts: n,
                top_p: 0.9,
                nucleus_temperature: 1.0,
                split: 5,
                spd: spd.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        ensure!(out.drafts().count() == n * 3, "n={n}: {} drafts", out.drafts().count());
        ensure!(out.forwards_used == n as u64 * 10, "n={n}: {} forwards", out.forwards_used);
    }

    let items = toy_qa(&WORDS, 50, 3);
    let config = CoverageConfig {
        spd: SpdParams { seed: 17, ..spd },
        top_p: 0.9,
        nucleus_temperature: 1.0,
        split: None,
    };
    let budgets = [1, 5, 10];
    let report = coverage_curve(&m, None, &vocab, &items, &budgets, &config).map_err(|e| e.to_string())?;
    let mut recount: BTreeMap<(&str, usize), (usize, usize)> = BTreeMap::new();
    for rec in &report.dump {
        let item = &items[rec.item];
        let covered = rec.drafts.iter().any(|d| item.aliases.iter().any(|a| hit(d, a)));
        let e = recount.entry((rec.strategy.as_str(), rec.budget)).or_default();
        e.0 += covered as usize;
        e.1 += 1;
    }
    let mut summary = Vec::new();
    for row in &report.rows {
        let (h, c) = recount[&(row.strategy.as_str(), row.budget)];
        ensure!(row.coverage == h as f64 / c as f64, "{} n={}: coverage differs from recount", row.strategy.as_str(), row.budget);
        let curve = retained_curve(&report.dump, &items, row.strategy, row.budget);
        ensure!(curve.windows(2).all(|w| w[0] <= w[1]), "coverage not monotone in retained drafts");
        ensure!(curve.last() == Some(&row.coverage), "retained curve end differs from coverage");
        if row.strategy == CoverageStrategy::NsSpd {
            let ns = report
                .rows
                .iter()
                .find(|r| r.strategy == CoverageStrategy::Ns && r.budget == row.budget)
                .unwrap();
            ensure!(row.forwards == ns.forwards && row.drafts == 3 * ns.drafts, "budget {}: accounting differs", row.budget);
        }
        summary.push(format!("{}@{}={:.2}", row.strategy.as_str(), row.budget, row.coverage));
    }
    Ok(format!("n=2..5 give 3n drafts at 10n forwards; coverage matches recount: {}", summary.join(" ")))
}

fn metric_identities() -> Outcome {
    for v in [2usize, 16, 64, 256, 1024] {
        let uniform =
            LinearMockLM::from_parts(Matrix::identity(v), Matrix::zeros(v, v), Matrix::zeros(v, v), vec![0.0; v]).unwrap();
        let tokens: Vec<u32> = (0..64).map(|i| (i * 97 % v) as u32).collect();
        let ppl = perplexity(&uniform, &tokens, 1..64).map_err(|e| e.to_string())?.value;
        ensure!(ppl == v as f64, "uniform perplexity {ppl} for |V|={v}");
    }
    let sb = self_bleu(&vec![vec![4u32, 8, 15, 16, 23, 42]; 3]).map_err(|e| e.to_string())?;
    ensure!(sb == 1.0, "identical-draft Self-BLEU {sb}");
    let u = ngram_uniqueness(&["a", "a", "a", "a"], 1).map_err(|e| e.to_string())?;
    ensure!(u == 0.25, "uniqueness {u}");
    let items = toy_qa(&WORDS, 100, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut totals = vec![0usize; 5];
    for item in &items {
        let drafts: Vec<String> = (0..5)
            .map(|_| (0..4).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" "))
            .collect();
        let p = precision_at_k(&drafts, &item.aliases);
        ensure!(p.windows(2).all(|w| w[0] <= w[1]), "P@k decreased");
        for (t, &x) in totals.iter_mut().zip(&p) {
            *t += x as usize;
        }
    }
    ensure!(totals.windows(2).all(|w| w[0] <= w[1]), "mean P@k decreased");
    Ok(format!("ppl=|V| exact for |V| in 2..1024 (powers of two), Self-BLEU=1, uniqueness=0.25, P@1..5 hits {totals:?}"))
}

fn run_twice(args: &[&str], files: &[&Path]) -> Result<(), String> {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        for f in files {
            let _ = std::fs::remove_file(f);
        }
        let o = Command::new(env!("CARGO_BIN_EXE_spd"))
            .args(args)
            .env_remove("SPD_PORT")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let contents: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap_or_default()).collect();
        outputs.push((o.stdout, contents));
    }
    ensure!(outputs[0] == outputs[1], "{:?} differs between runs", args.first());
    Ok(())
}

fn http(port: u16, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp.lines().next().unwrap_or("").to_string();
    let payload = resp.split_once("\r\n\r\n").map(|x| x.1).unwrap_or("");
    format!("{status}\n{payload}")
}

fn serve_session(dir: &Path, port: u16) -> Result<(Vec<u8>, Vec<String>), String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_spd"))
        .args(["serve", "--port", &port.to_string(), "--seed", "5"])
        .env_remove("SPD_PORT")
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        if Instant::now() > deadline {
            let _ = child.kill();
            return Err("server did not start".into());
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let mut replies = vec![http(port, "POST", "/v1/sessions", r#"{"backend":"mock","k":3}"#)];
    let id = replies[0]
        .split("\"session_id\":\"")
        .nth(1)
        .and_then(|s| s.split('"').next())
        .ok_or("no session id")?
        .to_string();
    replies.push(http(port, "POST", &format!("/v1/sessions/{id}/complete"), r#"{"prefix":"hello","steps":6}"#));
    replies.push(http(port, "POST", &format!("/v1/sessions/{id}/select"), r#"{"draft_index":1,"extend_steps":4}"#));
    replies.push(http(port, "GET", &format!("/v1/sessions/{id}"), ""));
    replies.push(http(port, "DELETE", &format!("/v1/sessions/{id}"), ""));
    let _ = child.kill();
    let mut stdout = Vec::new();
    child.stdout.take().unwrap().read_to_end(&mut stdout).unwrap();
    let _ = child.wait();
    Ok((stdout, replies))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    std::fs::write(p("corpus.txt"), "the cat sat on the mat\nthe dog sat on the log\n").unwrap();
    std::fs::write(
        p("qa.jsonl"),
        "{\"prompt\":\"Q: capital of France? A:\",\"aliases\":[\"paris\"]}\n{\"prompt\":\"the cat\",\"aliases\":[\"sat\"]}\n",
    )
    .unwrap();
    std::fs::write(p("prompts.txt"), "the cat\nthe dog\n").unwrap();
    let s = |path: &Path| path.to_str().unwrap().to_string();
    let (corpus, store, qa, prompts) = (s(&p("corpus.txt")), s(&p("s.spng")), s(&p("qa.jsonl")), s(&p("prompts.txt")));
    let (log, csv, dump, probe_csv, model) = (s(&p("log.jsonl")), s(&p("bench.csv")), s(&p("dump.jsonl")), s(&p("probe.csv")), s(&p("m.splm")));

    run_twice(&["build-ngram", "--corpus", &corpus, "--orders", "2-4", "--out", &store], &[&p("s.spng")])?;
    run_twice(
        &["decode", "--backend", "mock", "--k", "3", "--steps", "10", "--prefix", "the c", "--seed", "7", "--ngram", &store, "--pool", "40", "--log", &log],
        &[&p("log.jsonl")],
    )?;
    run_twice(&["decode", "--strategy", "nucleus", "--prefix", "hello", "--seed", "3"], &[])?;
    run_twice(&["bench", "--k", "1,3,8", "--steps", "10", "--out", &csv], &[&p("bench.csv")])?;
    run_twice(&["eval", "coverage", "--qa", &qa, "--budgets", "1,3", "--seed", "2", "--dump", &dump], &[&p("dump.jsonl")])?;
    run_twice(&["eval", "precision", "--qa", &qa, "--seed", "2"], &[])?;
    run_twice(&["eval", "drafts", "--prompts", &prompts, "--backend", "tiny", "--seed", "2"], &[])?;
    run_twice(&["probe", "--backend", "tiny", "--timesteps", "4", "--batches", "2", "--batch-size", "2", "--seed", "1", "--out", &probe_csv], &[&p("probe.csv")])?;
    run_twice(&["init-model", "--out", &model, "--seed", "4", "--dim", "16", "--heads", "2"], &[&p("m.splm")])?;
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let a = serve_session(dir.path(), port)?;
    let b = serve_session(dir.path(), port)?;
    ensure!(a.1.iter().all(|r| r.starts_with("HTTP/1.1 2")), "serve request failed: {:?}", a.1);
    ensure!(a == b, "serve responses differ between runs");
    Ok("build-ngram, decode, bench, eval (coverage, precision, drafts), probe, init-model, serve: byte-identical".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("greedy degeneration", 10.0, greedy_degeneration),
        ("beam oracle", 60.0, beam_oracle),
        ("compute contract", 10.0, compute_contract),
        ("linearity", 10.0, linearity),
        ("n-gram exactness", 30.0, ngram_exactness),
        ("smoothing identities", 5.0, smoothing_identities),
        ("superposition weights", 5.0, superposition),
        ("score bookkeeping", 10.0, score_bookkeeping),
        ("NS-SPD accounting", 30.0, ns_spd_accounting),
        ("metric identities", 10.0, metric_identities),
        ("CLI determinism", 30.0, cli_determinism),
    ];
    // Keep panics from individual criteria off the report.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        let result = match result {
            Ok(detail) if secs > *limit => Err(format!("{detail}; took {secs:.2}s, limit {limit}s")),
            r => r,
        };
        let (verdict, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {:>2} {verdict} [{secs:6.2}s] {name}: {detail}", i + 1);
        failed += result.is_err() as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

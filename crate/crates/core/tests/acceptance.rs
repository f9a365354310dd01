//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! `UM_ACCEPTANCE_SEED` fixes the seed of the randomized KNN check; otherwise
//! it is drawn from the clock and printed.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use universal_model::eval::{self, knn_oracle_check, EvalReport, SynthConfig};
use universal_model::predictor::UniversalModel;
use universal_model::repository::{LabelSchema, QuestionRecord, Repository};
use universal_model::retrieval::{brute_force_top_n, idf_value, Bm25Params, BruteForceScorer, InvertedIndex};
use universal_model::seacat::{self, attention, gradcheck, position_embedding, position_index, Sentence, Transcript};
use universal_model::text::tokenize;

fn word(i: usize) -> String {
    format!("w{i}")
}

/// Random corpus with skewed word frequencies, sparse shuffled ids and
/// lengths in `1..=max_len`.
fn random_repo(rng: &mut ChaCha8Rng, n_docs: usize, vocab: usize, max_len: usize) -> Repository {
    let mut ids: Vec<u64> = (0..n_docs as u64).map(|i| i * 3 + rng.random_range(0..3)).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let records = ids
        .into_iter()
        .map(|id| {
            let len = rng.random_range(1..=max_len);
            let q: Vec<String> =
                (0..len).map(|_| word((vocab as f64 * rng.random::<f64>().powi(3)) as usize)).collect();
            QuestionRecord::new(id, q.join(" "))
        })
        .collect();
    Repository::build(records, LabelSchema::new()).expect("generated records are valid")
}

fn random_query(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<String> {
    let len = rng.random_range(1..=8);
    let mut q: Vec<String> = (0..len)
        .map(|_| match rng.random_range(0..10) {
            0 => "unseen".to_owned(),
            _ => word((vocab as f64 * rng.random::<f64>().powi(2)) as usize),
        })
        .collect();
    if rng.random_bool(0.3) {
        q.push(q[0].clone());
    }
    q
}

fn bm25_oracle_equivalence() -> Result<String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB25);
    let (mut corpora, mut queries, mut results) = (0, 0, 0usize);
    for c in 0..120 {
        let n_docs = match c % 4 {
            0 => rng.random_range(1..=50),
            1 => rng.random_range(50..=1000),
            2 => rng.random_range(1000..=5000),
            _ => rng.random_range(5000..=10_000),
        };
        let vocab = rng.random_range(3..=3000);
        let params = Bm25Params::new(rng.random_range(0.1..3.0), rng.random_range(0.0..=1.0))?;
        let repo = random_repo(&mut rng, n_docs, vocab, 15);
        let index = InvertedIndex::build(&repo, params)?;
        let oracle = BruteForceScorer::new(&repo, params);
        for _ in 0..10 {
            let q = random_query(&mut rng, vocab);
            let n = [1, 5, 100, n_docs + 1][rng.random_range(0..4)];
            let got = index.top_n(&q, n)?;
            let want = oracle.top_n(&q, n);
            ensure!(got.len() == want.len(), "corpus {c}: {} results vs {}", got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                let rel = (g.score - w.score).abs() / w.score.abs().max(f64::MIN_POSITIVE);
                ensure!(g.doc_id == w.doc_id && g.rank == w.rank, "corpus {c} query {q:?}: {g:?} vs {w:?}");
                ensure!(rel <= 1e-9, "corpus {c} query {q:?}: score {} vs {}", g.score, w.score);
            }
            results += got.len();
            queries += 1;
        }
        corpora += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{corpora} corpora, {queries} queries, {results} results identical in {elapsed:.1?}"))
}

fn hand_fixtures() -> Result<String> {
    let records = ["shipping late", "shipping refund", "cancel order"]
        .iter()
        .enumerate()
        .map(|(i, q)| QuestionRecord::new(i as u64, *q))
        .collect();
    let repo = Repository::build(records, LabelSchema::new())?;
    let index = InvertedIndex::build(&repo, Bm25Params::default())?;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
    let toks = |s: &str| tokenize(s);
    ensure!(close(idf_value(3, 2), 0.470004), "idf(n=2) = {}", idf_value(3, 2));
    ensure!(close(idf_value(3, 3), 0.133531), "idf(n=3) = {}", idf_value(3, 3));
    ensure!(close(idf_value(3, 0), 2.079442), "idf(n=0) = {}", idf_value(3, 0));
    let s0 = index.bm25_score(&toks("shipping"), 0)?;
    let s1 = index.bm25_score(&toks("shipping refund"), 1)?;
    let s2 = index.bm25_score(&toks("shipping"), 2)?;
    ensure!(close(s0, 0.470004), "score(shipping, 0) = {s0}");
    ensure!(close(s1, 1.450833), "score(shipping refund, 1) = {s1}");
    ensure!(s2 == 0.0, "score(shipping, 2) = {s2}");
    let top = index.top_n(&toks("shipping"), 5)?;
    let ids: Vec<u64> = top.iter().map(|r| r.doc_id).collect();
    ensure!(ids == [0, 1] && top[0].score == top[1].score, "top_n(shipping) = {top:?}");
    let brute = brute_force_top_n(&repo, Bm25Params::default(), &toks("shipping"), 5);
    ensure!(brute == top, "brute force differs: {brute:?}");
    Ok(format!("0.470004 / 1.450833 within 1e-6 (got {s0:.6} / {s1:.6})"))
}

/// Labelled corpus with few categories and integer values so both vote ties
/// and even-count medians are common.
fn labelled_repo(rng: &mut ChaCha8Rng, n_docs: usize, vocab: usize) -> Repository {
    let schema = LabelSchema::new().categorical("cat").continuous("val");
    let n_cats = rng.random_range(2..=6);
    let records = (0..n_docs as u64)
        .map(|id| {
            let len = rng.random_range(1..=6);
            let q: Vec<String> = (0..len).map(|_| word(rng.random_range(0..vocab))).collect();
            QuestionRecord::new(id * 2, q.join(" "))
                .with_category("cat", format!("c{}", rng.random_range(0..n_cats)))
                .with_value("val", rng.random_range(0..20) as f64)
        })
        .collect();
    Repository::build(records, schema).expect("generated records are valid")
}

fn knn_equivalence() -> Result<String> {
    let seed = match std::env::var("UM_ACCEPTANCE_SEED") {
        Ok(s) => s.parse().context("UM_ACCEPTANCE_SEED must be an integer")?,
        Err(_) => std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH)?.as_nanos() as u64,
    };
    println!("    knn seed: {seed} (rerun with UM_ACCEPTANCE_SEED={seed})");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for c in 0..30 {
        let vocab = rng.random_range(3..=60);
        let n_docs = rng.random_range(1..=400);
        let repo = labelled_repo(&mut rng, n_docs, vocab);
        let model = UniversalModel::new(repo, Bm25Params::default())?;
        let queries: Vec<String> = (0..20).map(|_| random_query(&mut rng, vocab + 2).join(" ")).collect();
        for k in [1, 2, rng.random_range(3..=150), 100] {
            let r = knn_oracle_check(&model, &queries, k);
            ensure!(r.passed(), "seed {seed} corpus {c} k {k}: {:?}", r.divergences[0]);
            checked += r.checked;
        }
    }
    let synth = SynthConfig { n_clusters: 8, docs_per_cluster: 100, queries_per_cluster: 10, transcripts_per_cluster: 0, seed, ..SynthConfig::default() };
    let corpus = eval::generate(&synth)?;
    let model = UniversalModel::new(Repository::build(corpus.records, eval::synth::default_schema())?, Bm25Params::default())?;
    let queries: Vec<String> = corpus.queries.into_iter().map(|q| q.question).collect();
    let r = knn_oracle_check(&model, &queries, 100);
    ensure!(r.passed(), "seed {seed} synthetic corpus: {:?}", r.divergences[0]);
    checked += r.checked;
    Ok(format!("{checked} predictions, 0 divergences"))
}

fn gradient_check() -> Result<String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut params = 0;
    for seed in 0..60 {
        let (model, batch) = gradcheck::random_instance(seed);
        let r = gradcheck::check_gradients(&model, &batch, 1e-5)?;
        ensure!(r.max_relative_error <= 1e-4, "instance {seed}: {r:?}");
        worst = worst.max(r.max_relative_error);
        params += r.checked;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("60 instances, {params} parameters, max relative error {worst:.2e} in {elapsed:.1?}"))
}

fn attention_invariants() -> Result<String> {
    let mut runner = TestRunner::new(PropConfig { cases: 2000, failure_persistence: None, ..PropConfig::default() });
    let matrix = (1usize..10, 1usize..8).prop_flat_map(|(rows, d)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), rows),
            prop::collection::vec(-5.0f64..5.0, d),
            prop::collection::vec(any::<bool>(), rows),
        )
    });
    runner
        .run(&matrix, |(q, key, mut mask)| {
            mask[0] = true;
            let a = attention(&q, &key, &mask).unwrap();
            let sum: f64 = a.sigma.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6, "sum {sum}");
            prop_assert!(a.sigma.iter().all(|&s| s >= 0.0));
            for (s, m) in a.sigma.iter().zip(&mask) {
                if !m {
                    prop_assert_eq!(*s, 0.0);
                }
            }
            // identical rows: uniform over the unmasked ones
            let same = vec![q[0].clone(); q.len()];
            let u = attention(&same, &key, &mask).unwrap();
            let valid = mask.iter().filter(|&&m| m).count() as f64;
            for (s, m) in u.sigma.iter().zip(&mask) {
                let expect = if *m { 1.0 / valid } else { 0.0 };
                prop_assert!((s - expect).abs() <= 1e-12, "{} vs {}", s, expect);
            }
            let single = attention(&q[..1], &key, &[true]).unwrap();
            prop_assert_eq!(&single.sigma, &vec![1.0]);
            Ok(())
        })
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure!(attention(&[vec![1.0]], &[1.0], &[false]).is_err(), "fully masked input accepted");
    Ok("2000 random matrices: simplex, uniform, single-row and masking hold".into())
}

fn position_embeddings() -> Result<String> {
    let mut worst = 0.0f64;
    for d in [4, 768] {
        for i in 0..=128 {
            let e = position_embedding(i, d);
            ensure!(e.len() == d);
            for p in 0..d / 2 {
                let r = (e[2 * p].powi(2) + e[2 * p + 1].powi(2) - 1.0).abs();
                worst = worst.max(r);
                ensure!(r <= 1e-12, "i {i} d {d} pair {p}: {r:e}");
            }
        }
        let zero = position_embedding(0, d);
        ensure!(zero.iter().enumerate().all(|(j, &v)| v == if j % 2 == 0 { 0.0 } else { 1.0 }), "i=0 pattern, d {d}");
    }
    let mut sentences: Vec<Sentence> = (0..5).map(|_| Sentence::customer("hi")).collect();
    sentences.push(Sentence::agent("hello"));
    let t = Transcript::new(0, sentences);
    let idx = position_index(&t, 0, 64)?;
    ensure!(idx == 59, "offset -5 maps to {idx}");
    Ok(format!("max |sin^2+cos^2-1| = {worst:.1e}; i=0 exact; offset -5 -> {idx}"))
}

fn tagging_recovery() -> Result<String> {
    let start = Instant::now();
    let corpus = eval::generate(&SynthConfig::default())?;
    let cfg = seacat::SeacatConfig::toy(0);
    let (_, r) = eval::tagging_experiment(&corpus, cfg, &seacat::TrainParams::default(), 0.25, 2)?;
    let elapsed = start.elapsed();
    let summary = format!(
        "rule 2 {:.1}%, rule 1 {:.1}% on {} held-out transcripts in {elapsed:.1?}",
        r.rule2_recovery, r.rule1_recovery, r.n_heldout
    );
    ensure!(r.rule2_recovery >= 80.0, "{summary}");
    ensure!(r.rule2_recovery >= r.rule1_recovery, "{summary}");
    ensure!(elapsed < Duration::from_secs(300), "{summary}");
    Ok(summary)
}

/// Values from the first green run on the default synthetic config, k = 100;
/// columns are top1, top5, top10, top15, within3, within5, within7.
const FROZEN_SCALING: [(usize, [f64; 7]); 4] = [
    (3000, [95.0, 99.7, 99.9, 100.0, 40.1, 64.5, 79.9]),
    (6000, [96.1, 99.9, 100.0, 100.0, 43.4, 67.8, 82.9]),
    (9000, [96.5, 100.0, 100.0, 100.0, 43.2, 70.5, 84.7]),
    (12000, [96.7, 100.0, 100.0, 100.0, 44.7, 70.1, 84.8]),
];

fn row(r: &EvalReport) -> [f64; 7] {
    [r.top1, r.top5, r.top10, r.top15, r.within3, r.within5, r.within7]
}

fn scaling_reports() -> Result<Vec<EvalReport>> {
    let corpus = eval::generate(&SynthConfig::default())?;
    Ok(eval::scaling_experiment(&corpus, &[3000, 6000, 9000, 12000], 100, Bm25Params::default())?)
}

fn scaling_trend(reports: &[EvalReport]) -> Result<String> {
    let (first, last) = (&reports[0], &reports[reports.len() - 1]);
    ensure!(last.top1 >= first.top1 - 2.0, "top1 12K {} < 3K {} - 2", last.top1, first.top1);
    for (r, (size, frozen)) in reports.iter().zip(FROZEN_SCALING) {
        ensure!(r.repository_size == size);
        let got = row(r);
        ensure!(got.iter().zip(frozen).all(|(a, b)| (a - b).abs() < 1e-9), "size {size}: {got:?} != frozen {frozen:?}");
    }
    let top1: Vec<String> = reports.iter().map(|r| format!("{:.1}", r.top1)).collect();
    Ok(format!("top1 3K..12K = [{}]; all 28 frozen values match", top1.join(", ")))
}

fn metric_monotonicity(scaling: &[EvalReport]) -> Result<String> {
    let mut reports = scaling.to_vec();
    for seed in 0..3 {
        let cfg = SynthConfig { n_clusters: 10, docs_per_cluster: 200, queries_per_cluster: 20, transcripts_per_cluster: 0, seed, ..SynthConfig::default() };
        let corpus = eval::generate(&cfg)?;
        for k in [1, 3, 10, 100, 500] {
            reports.extend(eval::scaling_experiment(&corpus, &[500, 1000, 2000], k, Bm25Params::default())?);
        }
    }
    for r in &reports {
        ensure!(r.is_monotone(), "{r:?}");
    }
    Ok(format!("{} evaluations monotone", reports.len()))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>> {
    let out = Command::new(env!("CARGO_BIN_EXE_umodel")).args(args).current_dir(dir).output()?;
    ensure!(out.status.success(), "umodel {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(out.stdout)
}

fn determinism() -> Result<String> {
    let config = r#"{
        "synth": {"n_clusters": 4, "docs_per_cluster": 150, "queries_per_cluster": 10, "transcripts_per_cluster": 15, "seed": 5},
        "train": {"epochs": 60},
        "paths": {"repository": "repo.jsonl", "model": "model.json"}
    }"#;
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "-o", "data"],
        vec!["build-repo", "--records", "data/records.jsonl"],
        vec!["query", "bazuba kobaba", "-n", "20"],
        vec!["train", "data/transcripts.jsonl"],
        vec!["tag", "data/transcripts.jsonl", "-o", "tags.jsonl"],
        vec!["build-repo", "--transcripts", "data/transcripts.jsonl", "--categorical", "product_service",
             "--continuous", "handle_time", "-o", "tagged_repo.jsonl", "--skip-report", "skips.jsonl"],
        vec!["gradcheck", "--instances", "10"],
        vec!["eval", "--tagging", "--knn", "--csv", "table.csv", "-o", "eval.json"],
    ];
    let files = [
        "data/records.jsonl", "data/transcripts.jsonl", "data/queries.jsonl", "repo.jsonl", "model.json",
        "tags.jsonl", "tagged_repo.jsonl", "skips.jsonl", "table.csv", "eval.json",
    ];
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let mut stdouts = [Vec::new(), Vec::new()];
    for (dir, stdout) in dirs.iter().zip(&mut stdouts) {
        std::fs::write(dir.path().join("config.json"), config)?;
        for step in &steps {
            let mut args = vec!["--config", "config.json"];
            args.extend(step);
            stdout.push(run_cli(dir.path(), &args)?);
        }
        // predict needs a question drawn from the held-out set
        let queries = std::fs::read_to_string(dir.path().join("data/queries.jsonl"))?;
        let q: serde_json::Value = serde_json::from_str(queries.lines().next().context("no queries")?)?;
        let q = q["question"].as_str().context("query without question")?.to_owned();
        for label in ["product_service", "handle_time"] {
            stdout.push(run_cli(dir.path(), &["--config", "config.json", "predict", &q, "--label", label])?);
        }
    }
    for (i, (a, b)) in stdouts[0].iter().zip(&stdouts[1]).enumerate() {
        ensure!(a == b, "stdout of step {i} differs");
    }
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f))?;
        let b = std::fs::read(dirs[1].path().join(f))?;
        ensure!(!a.is_empty() || f == "skips.jsonl", "{f} is empty");
        ensure!(a == b, "{f} differs between runs");
    }

    // library paths: repository round-trip and training
    let repo_path = dirs[0].path().join("repo.jsonl");
    let again = dirs[0].path().join("repo_again.jsonl");
    Repository::load(&repo_path)?.save(&again)?;
    ensure!(std::fs::read(&repo_path)? == std::fs::read(&again)?, "repository round-trip changed bytes");
    let corpus = eval::generate(&SynthConfig { n_clusters: 3, transcripts_per_cluster: 20, ..SynthConfig::default() })?;
    let (examples, classes) = seacat::examples_from_transcripts(&corpus.transcripts, eval::synth::CATEGORY_LABEL)?;
    let params = seacat::TrainParams { epochs: 40, ..Default::default() };
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let m = seacat::train(&examples, classes.clone(), seacat::SeacatConfig::toy(0), &params)?.model;
        let mut buf = Vec::new();
        m.save(&mut buf)?;
        bytes.push(buf);
    }
    ensure!(bytes[0] == bytes[1], "two training runs differ");
    Ok(format!("{} CLI invocations and {} output files byte-identical; round-trip and training stable", stdouts[0].len(), files.len()))
}

fn percentile(mut v: Vec<Duration>, p: f64) -> Duration {
    v.sort();
    v[((v.len() - 1) as f64 * p).round() as usize]
}

fn latency() -> Result<String> {
    let cfg = SynthConfig { docs_per_cluster: 5000, queries_per_cluster: 20, transcripts_per_cluster: 0, ..SynthConfig::default() };
    let corpus = eval::generate(&cfg)?;
    let repo = Repository::build(corpus.records, eval::synth::default_schema())?;
    ensure!(repo.len() == 100_000);
    let index = InvertedIndex::build(&repo, Bm25Params::default())?;
    let brute = BruteForceScorer::new(&repo, Bm25Params::default());
    let queries: Vec<Vec<String>> = corpus.queries.iter().map(|q| tokenize(&q.question)).collect();
    for q in queries.iter().take(20) {
        index.top_n(q, 100)?;
    }
    let mut fast = Vec::new();
    for q in &queries {
        let t = Instant::now();
        std::hint::black_box(index.top_n(q, 100)?);
        fast.push(t.elapsed());
    }
    let mut slow = Vec::new();
    for q in queries.iter().take(40) {
        let t = Instant::now();
        std::hint::black_box(brute.top_n(q, 100));
        slow.push(t.elapsed());
    }
    let (p50, p50_brute) = (percentile(fast, 0.5), percentile(slow, 0.5));
    let speedup = p50_brute.as_secs_f64() / p50.as_secs_f64();
    let summary = format!("p50 {p50:.2?} (brute force {p50_brute:.2?}, {speedup:.0}x) over {} records", repo.len());
    ensure!(p50 < Duration::from_millis(5), "{summary}");
    ensure!(speedup >= 10.0, "{summary}");
    Ok(summary)
}

type Check = Box<dyn FnOnce() -> Result<String>>;

fn main() {
    let scaling = scaling_reports();
    let mut checks: Vec<(&str, Check)> = vec![
        ("bm25 oracle equivalence", Box::new(bm25_oracle_equivalence)),
        ("bm25 hand fixtures", Box::new(hand_fixtures)),
        ("knn equivalence", Box::new(knn_equivalence)),
        ("gradient check", Box::new(gradient_check)),
        ("attention invariants", Box::new(attention_invariants)),
        ("position embedding", Box::new(position_embeddings)),
        ("tagging recovery", Box::new(tagging_recovery)),
    ];
    match &scaling {
        Ok(reports) => {
            let r1 = reports.clone();
            let r2 = reports.clone();
            checks.push(("scaling trend", Box::new(move || scaling_trend(&r1))));
            checks.push(("metric monotonicity", Box::new(move || metric_monotonicity(&r2))));
        }
        Err(e) => {
            let msg = e.to_string();
            let msg2 = msg.clone();
            checks.push(("scaling trend", Box::new(move || Err(anyhow::anyhow!(msg)))));
            checks.push(("metric monotonicity", Box::new(move || Err(anyhow::anyhow!(msg2)))));
        }
    }
    checks.push(("determinism", Box::new(determinism)));
    checks.push(("query latency", Box::new(latency)));

    let mut failed = BTreeSet::new();
    for (i, (name, check)) in checks.into_iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let n = i + 1;
        match outcome {
            Ok(Ok(detail)) => println!("PASS [{n:>2}] {name}: {detail}"),
            Ok(Err(e)) => {
                println!("FAIL [{n:>2}] {name}: {e:#}");
                failed.insert(n);
            }
            Err(_) => {
                println!("FAIL [{n:>2}] {name}: panicked");
                failed.insert(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: {} of 11 criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
}

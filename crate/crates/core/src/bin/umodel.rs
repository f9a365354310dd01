use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use universal_model::config::{CliConfig, Fallback, Overrides};
use universal_model::eval::{self, knn_oracle_check, SynthConfig};
use universal_model::predictor::{PredictError, UniversalModel};
use universal_model::repository::{
    ingest_transcripts, write_skip_report, LabelExtractors, LabelKind, LabelSchema, Repository, RepositoryError,
};
use universal_model::seacat::{
    self, gradcheck, read_transcripts, write_transcripts, AttentionModel, SeacatConfig, SeacatError, TagRule, Tagger,
};

/// Retrieval-based label prediction for customer-service contacts.
#[derive(Debug, Parser)]
#[command(name = "umodel", version)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Indent JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tag the main customer question of each transcript.
    Tag {
        transcripts: PathBuf,
        /// 1: best customer sentence anywhere; 2: best near the agent's first sentence.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        rule: u8,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Assemble a question repository from records or tagged transcripts.
    BuildRepo {
        #[arg(long, conflicts_with = "transcripts", required_unless_present = "transcripts")]
        records: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        categorical: Vec<String>,
        #[arg(long)]
        continuous: Vec<String>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        rule: u8,
        /// JSON Lines file listing transcripts that produced no record.
        #[arg(long)]
        skip_report: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the most similar stored questions.
    Query {
        question: String,
        #[arg(short, default_value_t = 10)]
        n: usize,
    },
    /// Predict one label from the retrieved neighbors.
    Predict {
        question: String,
        #[arg(long)]
        label: String,
        /// Histogram bucket width for continuous labels.
        #[arg(long, default_value_t = 1.0)]
        bucket_width: f64,
    },
    /// Train the toy attention model on labelled transcripts.
    Train {
        transcripts: PathBuf,
        /// Text metadata field holding the class.
        #[arg(long, default_value = eval::synth::CATEGORY_LABEL)]
        label: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on random tiny models.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        instances: u64,
        #[arg(long, default_value_t = gradcheck::DEFAULT_EPS)]
        eps: f64,
    },
    /// Write the synthetic corpus (records, transcripts, held-out queries).
    Synth {
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run the repository-size experiment on the synthetic corpus.
    Eval {
        /// Nested repository sizes; defaults to quarters of the corpus.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also train the tagger and measure planted-question recovery.
        #[arg(long)]
        tagging: bool,
        /// Also compare the predictor against the naive KNN reference.
        #[arg(long)]
        knn: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

/// A check ran and failed; reported with its own exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CheckFailed(String);

/// Input was readable but the model or schema does not fit it.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Mismatch(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return 4;
        }
        if cause.is::<Mismatch>() {
            return 3;
        }
        if let Some(PredictError::NoMatch) = cause.downcast_ref::<PredictError>() {
            return 1;
        }
        if let Some(SeacatError::ModelMismatch(_)) = cause.downcast_ref::<SeacatError>() {
            return 3;
        }
        if let Some(RepositoryError::SchemaMismatch(..) | RepositoryError::SchemaViolation { .. }) =
            cause.downcast_ref::<RepositoryError>()
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = CliConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    let out = Output { pretty: cli.pretty };
    match cli.command {
        Command::Tag { transcripts, rule, output } => cmd_tag(&cfg, &transcripts, rule, output.as_deref()),
        Command::BuildRepo { records, transcripts, categorical, continuous, rule, skip_report, output } => {
            let schema = schema_from_flags(&categorical, &continuous);
            let dest = output.or(cfg.paths.repository.clone()).context("no output path (use --output or --repository)")?;
            let repo = match (records, transcripts) {
                (Some(r), _) => {
                    let reader = BufReader::new(open(&r)?);
                    Repository::read_jsonl(reader, schema.as_ref()).with_context(|| format!("reading {}", r.display()))?
                }
                (None, Some(t)) => {
                    let schema = schema.context("transcript ingest needs --categorical/--continuous labels")?;
                    build_from_transcripts(&cfg, &t, schema, rule, skip_report.as_deref())?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            repo.save(&dest).with_context(|| format!("writing {}", dest.display()))?;
            out.print(&json!({ "records": repo.len(), "output": dest }))
        }
        Command::Query { question, n } => {
            let model = load_model(&cfg)?;
            let hits = model.index().search(&question, n)?;
            let rows: Vec<_> = hits
                .iter()
                .map(|h| {
                    let rec = model.repository().get(h.doc_id).expect("result ids come from the repository");
                    json!({ "rank": h.rank, "doc_id": h.doc_id, "score": h.score, "question": rec.question })
                })
                .collect();
            out.print(&json!({ "query": question, "n": n, "results": rows }))
        }
        Command::Predict { question, label, bucket_width } => {
            if !(bucket_width > 0.0) {
                bail!("--bucket-width must be positive");
            }
            let model = load_model(&cfg)?;
            out.print(&predict_report(&model, &cfg, &question, &label, bucket_width)?)
        }
        Command::Train { transcripts, label, output } => {
            let ts = read_transcripts(BufReader::new(open(&transcripts)?))?;
            let (examples, classes) = seacat::examples_from_transcripts(&ts, &label)?;
            let outcome = seacat::train(&examples, classes, seacat_config(&cfg), &cfg.train)?;
            let dest = output.or(cfg.paths.model.clone()).context("no output path (use --output or --model)")?;
            outcome.model.save(BufWriter::new(create(&dest)?))?;
            out.print(&json!({
                "examples": examples.len(),
                "classes": outcome.model.classes.len(),
                "vocabulary": outcome.model.vocab.len(),
                "epochs": cfg.train.epochs,
                "initial_loss": outcome.losses[0],
                "final_loss": outcome.losses.last(),
                "train_accuracy": seacat::accuracy(&outcome.model, &examples)?,
                "output": dest,
            }))
        }
        Command::Gradcheck { instances, eps } => {
            let mut worst = 0.0f64;
            let mut checked = 0usize;
            let mut worst_param = None;
            for i in 0..instances {
                let (model, batch) = gradcheck::random_instance(cfg.train.seed.wrapping_add(i));
                let r = gradcheck::check_gradients(&model, &batch, eps)?;
                checked += r.checked;
                if r.max_relative_error > worst {
                    worst = r.max_relative_error;
                    worst_param = r.worst_param.map(|p| format!("instance {i}: {p}"));
                }
            }
            let passed = worst <= gradcheck::DEFAULT_TOLERANCE;
            out.print(&json!({
                "instances": instances,
                "parameters_checked": checked,
                "max_relative_error": worst,
                "worst_param": worst_param,
                "tolerance": gradcheck::DEFAULT_TOLERANCE,
                "passed": passed,
            }))?;
            if !passed {
                return Err(CheckFailed(format!("max relative error {worst:e} exceeds tolerance")).into());
            }
            Ok(())
        }
        Command::Synth { output } => {
            let corpus = eval::generate(&cfg.synth)?;
            std::fs::create_dir_all(&output).with_context(|| format!("creating {}", output.display()))?;
            let mut w = BufWriter::new(create(&output.join("records.jsonl"))?);
            corpus.write_records(&mut w)?;
            w.flush()?;
            write_transcripts(BufWriter::new(create(&output.join("transcripts.jsonl"))?), &corpus.transcripts)?;
            let mut w = BufWriter::new(create(&output.join("queries.jsonl"))?);
            corpus.write_queries(&mut w)?;
            w.flush()?;
            out.print(&json!({
                "records": corpus.records.len(),
                "transcripts": corpus.transcripts.len(),
                "queries": corpus.queries.len(),
                "seed": cfg.synth.seed,
            }))
        }
        Command::Eval { sizes, csv, tagging, knn, output } => cmd_eval(&cfg, &out, sizes, csv, tagging, knn, output),
    }
}

struct Output {
    pretty: bool,
}

impl Output {
    fn render<T: Serialize>(&self, value: &T) -> Result<String> {
        let mut s = if self.pretty { serde_json::to_string_pretty(value)? } else { serde_json::to_string(value)? };
        s.push('\n');
        Ok(s)
    }

    fn print<T: Serialize>(&self, value: &T) -> Result<()> {
        io::stdout().lock().write_all(self.render(value)?.as_bytes())?;
        Ok(())
    }

    fn write_to<T: Serialize>(&self, value: &T, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => std::fs::write(p, self.render(value)?).with_context(|| format!("writing {}", p.display())),
            None => self.print(value),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn schema_from_flags(categorical: &[String], continuous: &[String]) -> Option<LabelSchema> {
    if categorical.is_empty() && continuous.is_empty() {
        return None;
    }
    let schema = categorical.iter().fold(LabelSchema::new(), |s, c| s.categorical(c.as_str()));
    Some(continuous.iter().fold(schema, |s, c| s.continuous(c.as_str())))
}

fn seacat_config(cfg: &CliConfig) -> SeacatConfig {
    SeacatConfig {
        n_as: cfg.seacat.n_as,
        n_st: cfg.seacat.n_st,
        d_model: cfg.seacat.d_model,
        n_classes: 0,
        position_embeddings: cfg.seacat.position_embeddings,
    }
}

fn load_attention_model(cfg: &CliConfig) -> Result<AttentionModel> {
    let path = cfg.paths.model.as_deref().context("no model path (use --model)")?;
    let file = open(path)?;
    AttentionModel::load(BufReader::new(file))
        .map_err(|e| Mismatch(format!("{} is not a usable model: {e}", path.display())).into())
}

fn load_model(cfg: &CliConfig) -> Result<UniversalModel> {
    let path = cfg.paths.repository.as_deref().context("no repository path (use --repository)")?;
    let repo = Repository::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(UniversalModel::new(repo, cfg.bm25)?)
}

fn tag_rule(rule: u8) -> TagRule {
    TagRule::try_from(rule).expect("clap restricts the range")
}

fn cmd_tag(cfg: &CliConfig, transcripts: &Path, rule: u8, output: Option<&Path>) -> Result<()> {
    let ts = read_transcripts(BufReader::new(open(transcripts)?))
        .with_context(|| format!("reading {}", transcripts.display()))?;
    let tagger = Tagger::new(load_attention_model(cfg)?, tag_rule(rule), cfg.seacat.window);
    let mut buf = Vec::new();
    let mut failures = 0usize;
    for (line, t) in ts.iter().enumerate() {
        match tagger.tag(t) {
            Ok(r) => {
                serde_json::to_writer(&mut buf, &r)?;
                buf.push(b'\n');
            }
            Err(e) => {
                eprintln!("line {}: transcript {}: {e}", line + 1, t.id);
                failures += 1;
            }
        }
    }
    match output {
        Some(p) => std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    if failures > 0 {
        bail!("{failures} of {} transcripts could not be tagged", ts.len());
    }
    Ok(())
}

fn build_from_transcripts(
    cfg: &CliConfig,
    path: &Path,
    schema: LabelSchema,
    rule: u8,
    skip_report: Option<&Path>,
) -> Result<Repository> {
    let ts = read_transcripts(BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))?;
    let tagger = Tagger::new(load_attention_model(cfg)?, tag_rule(rule), cfg.seacat.window);
    let outcome = ingest_transcripts(&ts, |t| tagger.tag(t).map(|r| r.selected_index), &LabelExtractors::identity(schema.clone()));
    if let Some(p) = skip_report {
        let mut w = BufWriter::new(create(p)?);
        write_skip_report(&mut w, &outcome.skipped)?;
        w.flush()?;
    }
    if !outcome.skipped.is_empty() {
        eprintln!("skipped {} of {} transcripts", outcome.skipped.len(), ts.len());
    }
    Ok(Repository::build(outcome.records, schema)?)
}

fn predict_report(
    model: &UniversalModel,
    cfg: &CliConfig,
    question: &str,
    label: &str,
    bucket_width: f64,
) -> Result<serde_json::Value> {
    let k = cfg.predictor.k;
    let kind = model
        .repository()
        .schema()
        .kind(label)
        .ok_or_else(|| PredictError::UnknownLabel(label.to_owned()))?;
    let majority = cfg.predictor.fallback == Fallback::Majority;
    let fallback = |e: &PredictError| matches!(e, PredictError::NoMatch | PredictError::EmptyQuery) && majority;
    Ok(match kind {
        LabelKind::Categorical => {
            let (p, used) = match model.predict_categorical(question, label, k) {
                Ok(p) => (p, false),
                Err(e) if fallback(&e) => (model.prior_categorical(label)?, true),
                Err(e) => return Err(e.into()),
            };
            json!({
                "query": question, "label": label, "kind": "categorical", "k": k,
                "support": p.support, "fallback": used, "top": p.top(), "ranked": p.ranked,
            })
        }
        LabelKind::Continuous => {
            let (p, used) = match model.predict_continuous(question, label, k) {
                Ok(p) => (p, false),
                Err(e) if fallback(&e) => (model.prior_continuous(label)?, true),
                Err(e) => return Err(e.into()),
            };
            json!({
                "query": question, "label": label, "kind": "continuous", "k": k,
                "support": p.support, "fallback": used, "median": p.median,
                "histogram": p.histogram(bucket_width), "samples": if used { Vec::new() } else { p.samples.clone() },
            })
        }
    })
}

fn default_sizes(synth: &SynthConfig) -> Vec<usize> {
    let total = synth.total_docs();
    (1..=4).map(|q| total * q / 4).filter(|&n| n > 0).collect()
}

fn cmd_eval(
    cfg: &CliConfig,
    out: &Output,
    sizes: Vec<usize>,
    csv: Option<PathBuf>,
    tagging: bool,
    knn: bool,
    output: Option<PathBuf>,
) -> Result<()> {
    let corpus = eval::generate(&cfg.synth)?;
    let sizes = if sizes.is_empty() { default_sizes(&cfg.synth) } else { sizes };
    let k = cfg.predictor.k;
    let reports = eval::scaling_experiment(&corpus, &sizes, k, cfg.bm25)?;
    let monotone = reports.iter().all(|r| r.is_monotone());
    let mut doc = json!({ "seed": cfg.synth.seed, "k": k, "scaling": reports, "monotone": monotone });
    let mut failures = Vec::new();
    if !monotone {
        failures.push("metric monotonicity".to_owned());
    }
    if tagging {
        let (_, report) = eval::tagging_experiment(&corpus, seacat_config(cfg), &cfg.train, 0.25, cfg.seacat.window)?;
        doc["tagging"] = serde_json::to_value(&report)?;
    }
    if knn {
        let repo = Repository::build(corpus.records.clone(), eval::synth::default_schema())?;
        let model = UniversalModel::new(repo, cfg.bm25)?;
        let queries: Vec<String> = corpus.queries.iter().map(|q| q.question.clone()).collect();
        let report = knn_oracle_check(&model, &queries, k);
        if !report.passed() {
            failures.push(format!("{} KNN divergences", report.divergences.len()));
        }
        doc["knn"] = serde_json::to_value(&report)?;
    }
    if let Some(p) = csv {
        std::fs::write(&p, eval::reports_to_csv(&reports)).with_context(|| format!("writing {}", p.display()))?;
    }
    let dest = output.or_else(|| cfg.paths.reports.as_ref().map(|d| d.join("eval.json")));
    if let Some(d) = dest.as_deref().and_then(Path::parent).filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    out.write_to(&doc, dest.as_deref())?;
    if !failures.is_empty() {
        return Err(CheckFailed(failures.join("; ")).into());
    }
    Ok(())
}

//! The `facedyn` command line.

pub mod manifest;
pub mod trend;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use facedyn::corpus::{serialize_corpus, Corpus, CorpusError, CorpusReader, Outcome};
use facedyn::model::{EmbedderMode, Variant};
use facedyn::regression::{regress, steps_from_report, RegressionError};
use facedyn::stats::{face_act_distribution, StatsError};
use facedyn::taxonomy::{cohens_kappa, Flowchart, Scope, TaxonomyError};
use facedyn::train::metrics::donation_f1;
use facedyn::train::{
    compare_predictions, embed_corpus, evaluate, face_metrics, load_model, run_cv, save_model, train_on, CvReport,
    ModelConfig, TrainError,
};
use facedyn_service::{ApiError, Options, Store};
use serde_json::json;
use thiserror::Error;

pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: missing flags or config file. Exit status 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Service(#[from] ApiError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "facedyn",
    version,
    about = "Face acts and donation dynamics in persuasion dialogues"
)]
pub struct Cli {
    /// Model configuration (TOML, flat keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus in utterance-per-line JSON.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice; overrides the config [default: 13].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Label scope: er, ee or all.
    #[arg(long, global = true)]
    pub scope: Option<Scope>,
    /// Model variant: base, f or sf.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Utterance encoder input: static or contextual.
    #[arg(long, global = true)]
    pub embedder: Option<EmbedderMode>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write its canonical serialization.
    Ingest { path: PathBuf },
    /// Face-act distribution by role and outcome with t-test stars.
    Stats { path: Option<PathBuf> },
    /// Cohen's kappa between two annotations of the same conversations.
    Kappa { a: PathBuf, b: PathBuf },
    /// Train one model on the whole corpus and save a checkpoint.
    Train,
    /// Score a checkpoint on a corpus, or compare two CV reports.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// CV report whose predictions are compared with `--against`.
        #[arg(long, requires = "against")]
        report: Option<PathBuf>,
        #[arg(long, requires = "report")]
        against: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation; writes a JSON report.
    Cv,
    /// Donation-probability regression on the predicted face acts of a CV report.
    Regress {
        #[arg(long)]
        report: PathBuf,
    },
    /// Mean donation probability per step for donors and non-donors.
    TrendExport {
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the annotation HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for per-session event logs; sessions live in memory only without it.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Browser origin allowed by CORS; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
        /// Flowchart JSON replacing the bundled one.
        #[arg(long)]
        flowchart: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Stats { .. } => "stats",
            Command::Kappa { .. } => "kappa",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Cv => "cv",
            Command::Regress { .. } => "regress",
            Command::TrendExport { .. } => "trend-export",
            Command::Serve { .. } => "serve",
        }
    }
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("facedyn {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    match &cli.command {
        Command::Ingest { path } => ingest(cli, path),
        Command::Stats { path } => {
            let path = path.as_ref().or(cli.corpus.as_ref()).ok_or_else(|| missing("corpus"))?;
            stats(cli, path)
        }
        Command::Kappa { a, b } => kappa(cli, a, b),
        Command::Train => train(cli),
        Command::Evaluate {
            checkpoint,
            report,
            against,
        } => match (checkpoint, report, against) {
            (Some(ck), None, None) => evaluate_checkpoint(cli, ck),
            (None, Some(a), Some(b)) => evaluate_reports(cli, a, b),
            _ => Err(CliError::Usage(
                "evaluate needs either --checkpoint or --report with --against".into(),
            )),
        },
        Command::Cv => cv(cli),
        Command::Regress { report } => {
            let (report, digest) = read_report(report)?;
            let result = regress(&steps_from_report(&report)?)?;
            let m = RunManifest::new(name, Some(&report.config_digest), Some(&report.corpus_digest), cli)
                .with_input(digest);
            emit_csv(cli.out.as_deref(), &m, &result.to_csv())
        }
        Command::TrendExport { report } => {
            let (report, digest) = read_report(report)?;
            let rows = trend::trend_export(&report.traces)?;
            let m = RunManifest::new(name, Some(&report.config_digest), Some(&report.corpus_digest), cli)
                .with_input(digest);
            emit_csv(cli.out.as_deref(), &m, &trend::trend_csv(&rows))
        }
        Command::Serve {
            port,
            host,
            log_dir,
            cors_origin,
            flowchart,
        } => {
            let corpus_path = cli.corpus.as_ref().ok_or_else(|| missing("corpus"))?;
            let corpus = CorpusReader {
                seed: seed(cli),
                allow_unlabeled: true,
            }
            .read(corpus_path)?;
            let chart = match flowchart {
                Some(p) => Flowchart::from_json(&read(p)?)?,
                None => Flowchart::bundled(),
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Usage(format!("bad address {host}:{port}: {e}")))?;
            let store = Arc::new(Store::open(corpus, chart, log_dir.clone())?);
            let options = Options {
                cors_origin: cors_origin.clone(),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(format!("tokio runtime: {e}")))?;
            eprintln!("serving on http://{addr}");
            rt.block_on(facedyn_service::serve(addr, store, &options))?;
            Ok(())
        }
    }
}

fn missing(flag: &str) -> CliError {
    CliError::Usage(format!("--{flag} is required"))
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(facedyn::corpus::DEFAULT_SEED)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, content: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_corpus(path: &Path, seed: u64) -> Result<Corpus, CliError> {
    Ok(CorpusReader {
        seed,
        allow_unlabeled: false,
    }
    .read(path)?)
}

fn read_report(path: &Path) -> Result<(CvReport, String), CliError> {
    let raw = read(path)?;
    let digest = manifest::sha256_hex(raw.as_bytes());
    Ok((CvReport::from_json(&raw)?, digest))
}

/// CSV to `out` behind a `# manifest:` comment line, or bare to stdout.
fn emit_csv(out: Option<&Path>, m: &RunManifest, csv: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, format!("# manifest: {}\n{csv}", m.to_json_line()).as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// A JSON document to `out` with the manifest as its `manifest` field, or
/// bare to stdout.
fn emit_json(out: Option<&Path>, m: &RunManifest, mut value: serde_json::Value) -> Result<(), CliError> {
    if let (Some(p), Some(obj)) = (out, value.as_object_mut()) {
        obj.insert("manifest".into(), serde_json::to_value(m).expect("manifest serializes"));
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        return write(p, text.as_bytes());
    }
    println!("{}", serde_json::to_string_pretty(&value).expect("value serializes"));
    Ok(())
}

fn ingest(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(path, seed(cli))?;
    let canonical = serialize_corpus(&corpus);
    eprintln!(
        "{} conversations ({} donor, {} non-donor), {} utterances, {:.1}% multi-label; digest {}",
        corpus.len(),
        corpus.count(Outcome::Donor),
        corpus.count(Outcome::NonDonor),
        corpus.utterances().count(),
        100.0 * corpus.multi_label_fraction(),
        corpus.digest
    );
    match &cli.out {
        Some(out) => {
            write(out, canonical.as_bytes())?;
            let m = RunManifest::new("ingest", None, Some(&corpus.digest), cli);
            m.write_sidecar(out)
        }
        None => {
            print!("{canonical}");
            Ok(())
        }
    }
}

fn stats(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(path, seed(cli))?;
    let table = face_act_distribution(&corpus)?;
    print!("{}", table.to_text());
    if let Some(out) = &cli.out {
        let m = RunManifest::new("stats", None, Some(&corpus.digest), cli);
        write(
            out,
            format!("# manifest: {}\n{}", m.to_json_line(), table.to_csv()).as_bytes(),
        )?;
    }
    Ok(())
}

fn kappa(cli: &Cli, a: &Path, b: &Path) -> Result<(), CliError> {
    let ca = read_corpus(a, seed(cli))?;
    let cb = read_corpus(b, seed(cli))?;
    let (x, y) = ca.paired_labels(&cb)?;
    let ag = cohens_kappa(&x, &y)?;
    let value = json!({
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "n": ag.n,
        "observed": ag.observed,
        "expected": ag.expected,
        "kappa": ag.kappa,
    });
    if cli.out.is_none() {
        println!(
            "n={} observed={:.4} expected={:.4} kappa={:.4}",
            ag.n, ag.observed, ag.expected, ag.kappa
        );
        return Ok(());
    }
    let digest = manifest::sha256_hex(format!("{}\n{}", ca.digest, cb.digest).as_bytes());
    let m = RunManifest::new("kappa", None, Some(&digest), cli);
    emit_json(cli.out.as_deref(), &m, value)
}

/// Config from `--config` with the command-line overrides applied.
fn load_config(cli: &Cli) -> Result<ModelConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| missing("config"))?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("config file {} not found", path.display())));
    }
    let mut config = ModelConfig::load(path)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(s) = cli.scope {
        config.scope = s;
    }
    if let Some(v) = cli.variant {
        config.variant = v;
    }
    if let Some(e) = cli.embedder {
        config.embedder = e;
    }
    config.validate()?;
    for w in config.off_grid() {
        log::warn!("{w}");
    }
    Ok(config)
}

fn train(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let corpus_path = cli.corpus.as_ref().ok_or_else(|| missing("corpus"))?;
    let out = cli.out.as_ref().ok_or_else(|| missing("out"))?;
    let corpus = read_corpus(corpus_path, config.seed)?;
    let data = embed_corpus(&corpus, config.build_embedder()?.as_ref())?;
    let all: Vec<_> = data.conversations.iter().collect();
    let trained = train_on(&config, &all, data.dim, config.seed)?;
    save_model(out, &config, &trained)?;
    if let Some(last) = trained.loss_curve.last() {
        eprintln!(
            "trained {} epochs on {} conversations; final loss {:.5} (face {:.5}, donation {:.5})",
            trained.loss_curve.len(),
            all.len(),
            last.total,
            last.face,
            last.donation
        );
    }
    let m = RunManifest::new("train", Some(&config.digest()), Some(&corpus.digest), cli).with_seed(config.seed);
    m.write_sidecar(out)
}

fn evaluate_checkpoint(cli: &Cli, checkpoint: &Path) -> Result<(), CliError> {
    let corpus_path = cli.corpus.as_ref().ok_or_else(|| missing("corpus"))?;
    let (config, model, params) = load_model(checkpoint)?;
    let corpus = read_corpus(corpus_path, cli.seed.unwrap_or(config.seed))?;
    let data = embed_corpus(&corpus, config.build_embedder()?.as_ref())?;
    let all: Vec<_> = data.conversations.iter().collect();
    let preds = evaluate(&model, &params, &all)?;
    let metrics = face_metrics(&preds, config.scope)?;
    let probs: Vec<f64> = preds.iter().filter_map(|p| p.trace.probs.last().copied()).collect();
    let outcomes: Vec<bool> = preds
        .iter()
        .filter(|p| !p.trace.probs.is_empty())
        .map(|p| p.outcome == Outcome::Donor)
        .collect();
    let donation = donation_f1(&probs, &outcomes, 0.5).ok();
    let value = json!({
        "conversations": preds.len(),
        "face": metrics,
        "donation_f1_at_0_5": donation,
    });
    let mut digest_input = read_bytes(checkpoint)?;
    digest_input.extend_from_slice(corpus.digest.as_bytes());
    let m = RunManifest::new("evaluate", Some(&config.digest()), Some(&corpus.digest), cli)
        .with_seed(cli.seed.unwrap_or(config.seed))
        .with_input(manifest::sha256_hex(&digest_input));
    emit_json(cli.out.as_deref(), &m, value)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn evaluate_reports(cli: &Cli, a: &Path, b: &Path) -> Result<(), CliError> {
    let (ra, da) = read_report(a)?;
    let (rb, db) = read_report(b)?;
    let t = compare_predictions(&ra, &rb)?;
    let value = json!({
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "a_right_b_wrong": t.b,
        "a_wrong_b_right": t.c,
        "statistic": t.statistic,
        "p": t.p,
    });
    let m = RunManifest::new("evaluate", None, Some(&ra.corpus_digest), cli)
        .with_input(manifest::sha256_hex(format!("{da}\n{db}").as_bytes()));
    emit_json(cli.out.as_deref(), &m, value)
}

fn cv(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let corpus_path = cli.corpus.as_ref().ok_or_else(|| missing("corpus"))?;
    let corpus = read_corpus(corpus_path, config.seed)?;
    let data = embed_corpus(&corpus, config.build_embedder()?.as_ref())?;
    let report = run_cv(&config, &corpus, &data)?;
    eprintln!(
        "{} folds: accuracy {:.4}, macro-F1 {:.4}{}",
        report.folds.len(),
        report.mean.accuracy,
        report.mean.macro_f1,
        report
            .donation
            .map(|d| format!(", donation F1 {:.4} at threshold {:.3}", d.f1, d.threshold))
            .unwrap_or_default()
    );
    let m =
        RunManifest::new("cv", Some(&report.config_digest), Some(&report.corpus_digest), cli).with_seed(config.seed);
    let value = serde_json::to_value(&report).expect("report serializes");
    emit_json(cli.out.as_deref(), &m, value)
}

//! `ngd` — command-line front end for the n-gram decomposition pipeline.
//!
//! Every stage of the workflow is a subcommand: generate a corpus, train the
//! network, build n-gram features, fit the non-negative map, select features,
//! fit the reduced classifier, explain single documents, run the full
//! cross-validated comparison, and inspect any artifact on disk.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, malformed config),
//! 2 runtime error (missing files, failed stages). Errors are one line on
//! stderr.

mod artifacts;
mod commands;
mod config;
mod inspect;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(anyhow::anyhow!(msg.into()))
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(name = "ngd", version, about = "Reduce a text CNN to a sparse n-gram model")]
struct Cli {
    /// Master random seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON config file with per-stage sections; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-phrase synthetic corpus.
    Synth(SynthArgs),
    /// Train the convolutional classifier on a corpus.
    TrainCnn(TrainCnnArgs),
    /// Build an n-gram dictionary and binary presence features.
    Featurize(FeaturizeArgs),
    /// Fit the non-negative linear map from presence features to network
    /// representations.
    FitMap(FitMapArgs),
    /// Rank dictionary n-grams by map contribution and select the top set.
    Reduce(ReduceArgs),
    /// Fit the kernel classifier over the selected presence features.
    Classify(ClassifyArgs),
    /// Rank the n-grams behind one document's representation.
    Explain(ExplainArgs),
    /// Run the cross-validated comparison of the network and its reduction.
    Evaluate(EvaluateArgs),
    /// Identify an artifact, print its schema version, and verify a
    /// read-write-read round trip.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus output path (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Planted-phrase sidecar path [default: <out>.phrases.jsonl].
    #[arg(long, value_name = "FILE")]
    phrases_out: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    docs_per_class: Option<usize>,
    #[arg(long)]
    doc_length: Option<usize>,
    #[arg(long)]
    phrases_per_class: Option<usize>,
    #[arg(long)]
    phrase_length: Option<usize>,
    /// Size of the shared filler-token pool.
    #[arg(long)]
    filler_vocab: Option<usize>,
    /// Probability that a planted phrase is dropped from a document.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct TrainCnnArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    model_out: PathBuf,
    /// Per-epoch training log output (JSONL).
    #[arg(long, value_name = "FILE")]
    log_out: Option<PathBuf>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Comma-separated convolution window widths.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Filters per convolution module.
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Minimum token count for the vocabulary.
    #[arg(long)]
    vocab_min_count: Option<usize>,
    /// Fraction of each class held out for early stopping.
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Build the dictionary from the corpus and write it here.
    #[arg(long, value_name = "FILE", conflicts_with = "dict_in")]
    dict_out: Option<PathBuf>,
    /// Compute presence against an existing dictionary instead of building
    /// one.
    #[arg(long, value_name = "FILE")]
    dict_in: Option<PathBuf>,
    /// Presence-feature output, one row per document.
    #[arg(long, value_name = "FILE")]
    presence_out: Option<PathBuf>,
    #[arg(long, conflicts_with = "dict_in")]
    ngram_min: Option<usize>,
    #[arg(long, conflicts_with = "dict_in")]
    ngram_max: Option<usize>,
    /// Discard n-grams appearing in fewer documents than this.
    #[arg(long, conflicts_with = "dict_in")]
    min_df: Option<usize>,
}

#[derive(Args)]
struct FitMapArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Trained network artifact.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: PathBuf,
    #[arg(long, value_name = "FILE")]
    map_out: PathBuf,
    /// Stationarity tolerance for the non-negative solver.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: PathBuf,
    /// Full contribution ranking output (CSV).
    #[arg(long, value_name = "FILE")]
    ranking_out: Option<PathBuf>,
    /// Selected feature-set output (JSON).
    #[arg(long, value_name = "FILE")]
    selected_out: PathBuf,
    /// Keep exactly this many features.
    #[arg(long, conflicts_with = "top_fraction")]
    top_k: Option<usize>,
    /// Keep ceil(fraction · dictionary size) features.
    #[arg(long)]
    top_fraction: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Labeled corpus the classifier is fit on.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: PathBuf,
    /// Selected feature set from `reduce`.
    #[arg(long, value_name = "FILE")]
    selected: PathBuf,
    #[arg(long, value_name = "FILE")]
    classifier_out: PathBuf,
    /// Fix the kernel length scale instead of tuning it on a held-out
    /// split.
    #[arg(long)]
    length_scale: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Fraction of each class held out for length-scale tuning.
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: PathBuf,
    /// Document to explain.
    #[arg(long)]
    doc_id: usize,
    /// Number of ranked n-grams to keep.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Output path; prints to stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE", default_value = "report.json")]
    report_out: PathBuf,
    #[arg(long, value_name = "FILE", default_value = "table.txt")]
    table_out: PathBuf,
    /// Evaluate this corpus instead of a generated one.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Planted-phrase sidecar enabling the recovery metric (with --corpus).
    #[arg(long, value_name = "FILE", requires = "corpus")]
    phrases: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, conflicts_with = "top_fraction")]
    top_k: Option<usize>,
    #[arg(long)]
    top_fraction: Option<f64>,
}

#[derive(Args)]
struct InspectArgs {
    /// Artifact to identify.
    path: PathBuf,
    /// Dictionary file, required to round-trip map artifacts.
    #[arg(long, value_name = "FILE")]
    dict: Option<PathBuf>,
}

/// Settings shared by every subcommand, already merged with the config file.
pub struct Global {
    seed: Option<u64>,
    config: config::ConfigFile,
}

impl Global {
    /// Seed precedence: command line, then config file, then `fallback`.
    fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.or(self.config.seed).unwrap_or(fallback)
    }
}

/// Caps the worker pool when NGD_THREADS is set; rayon's default is the
/// available core count.
fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("NGD_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("NGD_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| runtime(format!("worker pool setup failed: {e}")))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let global = Global { seed: cli.seed, config: config::load_config(cli.config.as_deref())? };
    match cli.command {
        Command::Synth(args) => commands::synth(&global, &args),
        Command::TrainCnn(args) => commands::train_cnn(&global, &args),
        Command::Featurize(args) => commands::featurize(&global, &args),
        Command::FitMap(args) => commands::fit_map(&global, &args),
        Command::Reduce(args) => commands::reduce(&global, &args),
        Command::Classify(args) => commands::classify(&global, &args),
        Command::Explain(args) => commands::explain(&global, &args),
        Command::Evaluate(args) => commands::evaluate(&global, &args),
        Command::Inspect(args) => inspect::inspect(&args),
    }
}

/// Collapses a message to one stderr-friendly line.
fn one_line(msg: &str) -> String {
    msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

/// Renders an error chain as `outer: … : root`, skipping causes whose text
/// the outer message already carries (some library errors describe their
/// source in their own Display).
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("error");
            eprintln!("{}", one_line(first));
            return 1;
        }
    };
    let result = init_threads().and_then(|()| dispatch(cli));
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {}", one_line(&render_chain(&e)));
            2
        }
    }
}

fn main() {
    std::process::exit(run());
}

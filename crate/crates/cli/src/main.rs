//! `narrative`: preprocessing, training, decoding sweeps and evaluation from
//! the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 bridge failure.

mod commands;
mod engine;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use engine::{BridgeArgs, ModelArgs};
use narrative_core::corpus::LengthClass;
use narrative_core::decode::Strategy;
use narrative_core::lm::PerplexityScope;

#[derive(Debug, Parser)]
#[command(name = "narrative", version, about = "Decoding experiments for prompt-conditioned story generation")]
pub struct Cli {
    /// Worker threads for sweeps; defaults to the number of logical cores.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// JSON file with sweep/decoding settings (same schema as a sweep spec).
    /// Command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, truncate and format prompt/response pairs.
    Preprocess(PreprocessArgs),
    /// Train an add-alpha n-gram model on preprocessed examples.
    Train(TrainArgs),
    /// Generate responses to one or more prompts.
    Generate(GenerateArgs),
    /// Sweep nucleus p over a grid.
    SweepP(SweepArgs),
    /// Sweep the anti-LM weight lambda over a grid at a fixed p.
    SweepLambda(SweepArgs),
    /// Diversity metrics per decoding configuration.
    Metrics(MetricsArgs),
    /// Fleiss' kappa and mean score per rated metric.
    Agreement(AgreementArgs),
    /// Spearman correlation and a t-test between two CSV columns.
    Correlate(CorrelateArgs),
    /// Empirical CDF of sampled-space sizes per p.
    Cdf(CdfArgs),
    /// Run the protocol conformance checks against a bridge server.
    BridgeCheck(BridgeArgs),
    /// Serve the built-in mock model over the bridge protocol.
    #[command(hide = true)]
    MockBridge(MockBridgeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    /// `<input>` is a `.wp_source` file; the matching `.wp_target` sits next to it.
    Paired,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TokenizerKind {
    Whitespace,
    Bridge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedderKind {
    Builtin,
    Bridge,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: InputFormat,
    #[arg(long, default_value = "medium")]
    pub class: LengthClass,
    #[arg(long, value_enum, default_value = "whitespace")]
    pub tokenizer: TokenizerKind,
    #[command(flatten)]
    pub bridge: BridgeArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Print corpus statistics as JSON to stdout.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Preprocessed examples (JSON lines).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Add-alpha smoothing constant. Small values keep next-token
    /// distributions peaked enough for nucleus experiments.
    #[arg(long, default_value_t = 3e-5)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out preprocessed examples; prints their perplexity to stdout.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "response-only")]
    pub scope: ScopeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    ResponseOnly,
    FullSequence,
}

impl From<ScopeArg> for PerplexityScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::ResponseOnly => Self::ResponseOnly,
            ScopeArg::FullSequence => Self::FullSequence,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Prompt text, or a file of prompts (JSON-lines pairs or one per line).
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value = "nucleus")]
    pub strategy: Strategy,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mmi_window: Option<usize>,
    /// Apply the anti-LM term after the strategy filter instead of before.
    #[arg(long)]
    pub mmi_after_filter: bool,
    /// Response length class; sets the token limit to its cap.
    #[arg(long)]
    pub max_class: Option<LengthClass>,
    /// Explicit token limit; overrides --max-class.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write full generation records, step traces included, as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sweep spec JSON; takes the place of --config.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Prompts file (JSON-lines pairs or one per line), replacing any prompts from the sweep file.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Comma-separated grid values, replacing the grid from the sweep file.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub stories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub class: Option<LengthClass>,
    #[arg(long)]
    pub mmi_after_filter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Records file, or a sweep output directory.
    #[arg(long)]
    pub records: PathBuf,
    /// Comma-separated n values for dist-n.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub dist: Vec<usize>,
    /// Also compute embedding-based sentence diversity.
    #[arg(long)]
    pub sent_div: bool,
    #[arg(long, value_enum, default_value = "builtin")]
    pub embedder: EmbedderKind,
    #[command(flatten)]
    pub bridge: BridgeArgs,
    /// Pool n-grams across responses instead of averaging per response.
    #[arg(long)]
    pub pooled: bool,
    /// Model label recorded in the reports.
    #[arg(long, default_value = "ngram")]
    pub label: String,
    /// Saved n-gram model and preprocessed examples for a perplexity column.
    #[arg(long, requires = "ppl_data")]
    pub ppl_model: Option<PathBuf>,
    #[arg(long, requires = "ppl_model")]
    pub ppl_data: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the reports as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// CSV with columns item_id, metric, annotator_id, score.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Number of Likert points.
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// Paired t-test over rows instead of Welch's unpaired test.
    #[arg(long)]
    pub paired: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CdfArgs {
    /// Records file, or a sweep output directory.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep p = 1, whose sampled space is always the whole vocabulary.
    #[arg(long)]
    pub include_p1: bool,
}

#[derive(Debug, Args)]
pub struct MockBridgeArgs {
    /// Listen on this TCP port instead of serving stdio.
    #[arg(long)]
    pub port: Option<u16>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

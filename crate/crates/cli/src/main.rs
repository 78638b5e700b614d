//! `gazeflow`: compare token-importance signals with reading fixations.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gazeflow_core::analyses::Grouping;
use gazeflow_core::{CorrelationKind, CorrelationLevel, Task};

#[derive(Parser, Debug)]
#[command(name = "gazeflow", version, about = "Token importance versus human reading fixations")]
pub struct Cli {
    /// Seed for every randomized step (permutations, sampling, fixtures).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Attention-flow importance per word.
    Flow(FlowArgs),
    /// Mean final-layer attention received per word.
    MeanAttn(AttnInput),
    /// Best-matching final-layer head per sentence.
    OracleHead(OracleArgs),
    /// Correlate human scores with model scores.
    Correlate(CorrelateArgs),
    /// Correlations within POS tags, predictability bins or length buckets.
    Grouped(GroupedArgs),
    /// Mean score entropy, optionally length-stratified across two corpora.
    Entropy(EntropyArgs),
    /// Correlations on sentences read in both a natural and a task corpus.
    Duplicates(DuplicatesArgs),
    /// Word predictability from an n-gram Kneser-Ney model.
    Predictability(PredictabilityArgs),
    /// Negative log corpus frequency per word.
    FreqBaseline(FreqArgs),
    /// Input-reduction curves against an external scorer.
    Reduce(ReduceArgs),
    /// Write the synthetic fixture set.
    ExportFixtures(ExportArgs),
}

#[derive(Args, Debug)]
pub struct AttnInput {
    /// ATNF tensor files; the sentence id is the file stem.
    #[arg(long = "tensor", value_name = "PATH", required_unless_present = "manifest")]
    pub tensors: Vec<PathBuf>,
    /// Exporter manifest listing tensor files and sentence ids.
    #[arg(long, conflicts_with = "tensors")]
    pub manifest: Option<PathBuf>,
    /// Corpus with reference words; without it words are rebuilt from subwords.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    /// Subword continuation marker.
    #[arg(long, default_value = "##")]
    pub marker: String,
    /// Source label for the emitted scores.
    #[arg(long)]
    pub source: Option<String>,
    /// Output score file (JSON lines); `-` for stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[command(flatten)]
    pub input: AttnInput,
    /// Attention layer the flow terminates at (0-based, default: last).
    #[arg(long)]
    pub layer: Option<usize>,
    /// `aggregate` or a token position.
    #[arg(long, default_value = "aggregate")]
    pub target: String,
    /// Add residual connections (0.5 A + 0.5 I).
    #[arg(long, overrides_with = "no_residual")]
    pub residual: bool,
    #[arg(long = "no-residual")]
    pub no_residual: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: AttnInput,
    /// Per-sentence head choice and rho as CSV.
    #[arg(long)]
    pub heads_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// Corpus (its fixations) or a single-source score file.
    #[arg(long)]
    pub human: PathBuf,
    /// Score file; every source in it is correlated with the human scores.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value = "token")]
    pub level: CorrelationLevel,
    #[arg(long, default_value = "spearman")]
    pub kind: CorrelationKind,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    /// CSV report; `-` for stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GroupedArgs {
    /// Corpus providing fixations, POS tags and sentence lengths.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Human scores instead of the corpus fixations.
    #[arg(long)]
    pub human: Option<PathBuf>,
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value = "pos")]
    pub grouping: Grouping,
    /// Score file with per-word predictability (for `predictability`).
    #[arg(long)]
    pub predictability: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Most frequent POS tags to report; 0 reports all.
    #[arg(long, default_value_t = 6)]
    pub top_k: usize,
    #[arg(long, default_value_t = 3)]
    pub min_n: usize,
    /// Sentence-length bucket width in words.
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value = "spearman")]
    pub kind: CorrelationKind,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    /// Mean standardized score per POS tag, long format (group,source,value).
    #[arg(long)]
    pub means_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    #[arg(long)]
    pub corpus_a: PathBuf,
    #[arg(long = "scores-a", required_unless_present = "gaze")]
    pub scores_a: Vec<PathBuf>,
    /// Second corpus; enables length-stratified sampling.
    #[arg(long)]
    pub corpus_b: Option<PathBuf>,
    #[arg(long = "scores-b")]
    pub scores_b: Vec<PathBuf>,
    #[arg(long, default_value = "sr")]
    pub task_a: Task,
    #[arg(long, default_value = "rel")]
    pub task_b: Task,
    /// Include each corpus's own fixations as source `gaze`.
    #[arg(long)]
    pub gaze: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DuplicatesArgs {
    /// Natural-reading corpus.
    #[arg(long)]
    pub nr: PathBuf,
    /// Task-specific reading corpus.
    #[arg(long)]
    pub tsr: PathBuf,
    #[arg(long = "scores")]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value = "spearman")]
    pub kind: CorrelationKind,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictabilityArgs {
    /// Training text, one whitespace-tokenized sentence per line.
    #[arg(long, required_unless_present = "model")]
    pub train: Option<PathBuf>,
    /// Previously saved model instead of training.
    #[arg(long, conflicts_with = "train")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Fixed discount for every order instead of the count-of-counts estimate.
    #[arg(long)]
    pub discount: Option<f64>,
    /// Map training words seen fewer times to `<unk>`.
    #[arg(long, default_value_t = 1)]
    pub unk_threshold: u64,
    /// Keep case instead of lower-casing.
    #[arg(long)]
    pub keep_case: bool,
    #[arg(long, default_value = "predictability")]
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Held-out text to report perplexity on.
    #[arg(long, requires = "ppl_out")]
    pub eval: Option<PathBuf>,
    /// Perplexity report (JSON).
    #[arg(long)]
    pub ppl_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FreqArgs {
    /// Frequency table, `token<TAB>count`.
    #[arg(long)]
    pub freq: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    #[arg(long, default_value = "bnc")]
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RevealOrder {
    /// Descending importance score.
    Importance,
    /// Seeded random permutation.
    Random,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    /// Corpus with labels (and POS tags for the summary).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Importance scores used to order words.
    #[arg(long, required_if_eq("order", "importance"))]
    pub scores: Option<PathBuf>,
    /// Source to use when the score file holds several.
    #[arg(long)]
    pub source: Option<String>,
    /// `tcp://host:port`, `exec:<program> [args]` or `mock:<weights.tsv>`.
    #[arg(long, env = "GAZEFLOW_SCORER")]
    pub scorer: String,
    /// Task name sent to the scorer (default: the corpus task).
    #[arg(long)]
    pub task_name: Option<String>,
    #[arg(long, default_value = "sr")]
    pub task: Task,
    #[arg(long, value_enum, default_value = "importance")]
    pub order: RevealOrder,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Curves as JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregate summary (JSON).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub sentences: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

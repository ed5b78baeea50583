//! The `ssmix` command line: dataset generation, two-step training,
//! evaluation, single-pair mixing and saliency dumps, and ablation sweeps.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

mod commands;
mod resolve;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use ssmix::corpus::{DataFormat, Schema, Task};
use ssmix::mixer::Variant;
use ssmix::trainer::{EvalEvery, LossWeighting, OptimizerKind};
use ssmix::{Error, ErrorKind};

pub use resolve::{Preset, RunSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ssmix", version, about = "Saliency-guided span mixup for text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic keyword-topic dataset.
    Gen(GenArgs),
    /// Train a classifier: plain cross-entropy, then mixup fine-tuning.
    Train(TrainArgs),
    /// Score a trained run's checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Mix one example into another and print the result as TSV.
    Mix(MixArgs),
    /// Print per-token saliency scores as TSV.
    Saliency(SaliencyArgs),
    /// Train every variant over several seeds and summarize.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// single or paired.
    #[arg(long, default_value_t = Task::Single)]
    pub task: Task,
    /// Number of keyword topics (the class count for the single task).
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 400)]
    pub n_valid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub keywords_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub noise_words: usize,
    /// tsv or jsonl.
    #[arg(long, default_value_t = DataFormat::Tsv)]
    pub format: DataFormat,
    /// Overwrite existing files in the output directory.
    #[arg(long)]
    pub force: bool,
}

/// Every setting of a training run. Precedence: flags given on the command
/// line, then the `--config` manifest, then the preset's defaults.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (TSV or JSONL).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation data, labels drawn from the training file's label set.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// A `key=value` manifest, such as one written by a previous run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// finetune: the fine-tuning rates (5e-5 / 1e-5). desk: rates that train
    /// the small model from scratch (1e-2 / 2e-3).
    #[arg(long, value_enum, default_value_t = Preset::Finetune)]
    pub preset: Preset,
    /// single or paired.
    #[arg(long, default_value_t = Schema::Single)]
    pub schema: Schema,
    /// tsv or jsonl [default: from the file extension].
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Maximum sequence length including CLS and SEP.
    #[arg(long, default_value_t = resolve::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Minimum training-corpus count for a vocabulary entry.
    #[arg(long, default_value_t = resolve::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    /// Embedding width.
    #[arg(long, default_value_t = resolve::DEFAULT_DIM)]
    pub dim: usize,
    /// Hidden width.
    #[arg(long, default_value_t = resolve::DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Step-one learning rate.
    #[arg(long, default_value_t = 5e-5)]
    pub lr1: f64,
    /// Step-one epochs.
    #[arg(long, default_value_t = 3)]
    pub epochs1: usize,
    /// Step-two learning rate.
    #[arg(long, default_value_t = 1e-5)]
    pub lr2: f64,
    /// Step-two epochs.
    #[arg(long, default_value_t = 5)]
    pub epochs2: usize,
    /// Even batch size; step two halves each batch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Prior mixing ratio for token-level variants.
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    /// Beta(alpha, alpha) parameter for embedmix and hiddenmix.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// none, embedmix, hiddenmix, ssmix, random_span, random_token or unk_replace.
    #[arg(long, default_value_t = Variant::Ssmix)]
    pub variant: Variant,
    /// "epoch" or a step count.
    #[arg(long, default_value_t = EvalEvery::Epoch)]
    pub eval_every: EvalEvery,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Fraction of each step's updates spent warming up.
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    /// label: the soft label's weighting. algorithm1: ratio on the first label.
    #[arg(long, default_value_t = LossWeighting::Label)]
    pub loss_weighting: LossWeighting,
    /// adamw or sgd.
    #[arg(long, default_value_t = OptimizerKind::AdamW)]
    pub optimizer: OptimizerKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset file to score.
    #[arg(long)]
    pub data: PathBuf,
    /// valid or test.
    #[arg(long, default_value_t = ssmix::corpus::Split::Valid)]
    pub split: ssmix::corpus::Split,
    /// tsv or jsonl [default: from the file extension].
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Checkpoint to score [default: RUN/best.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Where a model and its vocabulary come from.
#[derive(Debug, Args)]
pub struct ModelSource {
    /// Run directory written by `train`; supplies the vocabulary, labels,
    /// checkpoint and sequence length.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint file, overriding the run's.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Label map, `label<TAB>index` per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Maximum sequence length [default: the run's, else 128].
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// First example (the one receiving tokens).
    #[arg(long)]
    pub a: String,
    /// Second sentence of the first example, for paired tasks.
    #[arg(long)]
    pub a2: Option<String>,
    /// Second example (the one donating tokens).
    #[arg(long)]
    pub b: String,
    /// Second sentence of the second example, for paired tasks.
    #[arg(long)]
    pub b2: Option<String>,
    /// Label of the first example: a label name, or an index without a label map.
    #[arg(long)]
    pub label_a: String,
    /// Label of the second example.
    #[arg(long)]
    pub label_b: String,
    /// Prior mixing ratio.
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    /// ssmix, random_span, random_token or unk_replace.
    #[arg(long, default_value_t = Variant::Ssmix)]
    pub variant: Variant,
    /// Seed for the random variants.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub text: String,
    /// Second sentence, for paired tasks.
    #[arg(long)]
    pub text2: Option<String>,
    /// Gold label: a label name, or an index without a label map.
    #[arg(long)]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Seeds as an inclusive range `a..b` or a comma list.
    #[arg(long, default_value = "0..4")]
    pub seeds: String,
    /// Comma-separated variants.
    #[arg(long, default_value = "none,embedmix,hiddenmix,ssmix,random_span,random_token,unk_replace")]
    pub variants: String,
}

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code. Diagnostics go to stderr as a single line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m.clone()).unwrap_or_default();
    match dispatch(cli.command, &sub) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, matches: &ArgMatches) -> ssmix::Result<()> {
    let mut out = std::io::stdout().lock();
    match command {
        Command::Gen(args) => commands::gen(&args, &mut out),
        Command::Train(args) => commands::train(&args, matches, &mut out),
        Command::Eval(args) => commands::eval(&args, &mut out),
        Command::Mix(args) => commands::mix(&args, &mut out),
        Command::Saliency(args) => commands::saliency(&args, &mut out),
        Command::Sweep(args) => commands::sweep(&args, matches, &mut out),
    }
}

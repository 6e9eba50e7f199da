//! Command-line pipeline: validate, stats, extract, select-topk, eval, qc and
//! report.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage errors. Output
//! files are written atomically, and nothing is written when arguments are
//! rejected.

mod commands;
mod models;

use crate::faithfulness::MapScope;
use crate::report::ReportFormat;
use crate::saliency::TopkScope;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "rationale-eval",
    version,
    about = "Evaluate token-level rationales for plausibility and faithfulness"
)]
pub struct Cli {
    /// Seed for every random choice (model init, LIME sampling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-instance work. Results do not depend on it.
    #[arg(long, global = true, env = "RATIONALE_EVAL_JOBS", default_value_t = 1,
          value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset against the schema rules.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Dataset size, rationale length ratio and rationale set count.
    Stats {
        #[command(flatten)]
        input: DatasetArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compute saliency score maps.
    Extract(ExtractArgs),
    /// Turn score maps into top-k rationales.
    SelectTopk {
        #[arg(long)]
        scores: PathBuf,
        /// Dataset used for the default RLR and segment boundaries.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Override the dataset's rationale length ratio.
        #[arg(long)]
        rlr: Option<f64>,
        #[arg(long, value_enum, default_value_t = TopkScope::Segment)]
        topk_scope: TopkScope,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
    /// Token-F1 and IOU-F1 against human rationales.
    EvalPlausibility {
        #[command(flatten)]
        input: DatasetArgs,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// MAP under perturbation, and sufficiency / comprehensiveness.
    EvalFaithfulness(FaithfulnessArgs),
    /// Score annotation confidence ratings.
    Qc {
        #[command(flatten)]
        input: DatasetArgs,
        #[arg(long)]
        ratings: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Merge JSON reports and re-emit them as JSON or CSV.
    Report {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Skip malformed dataset lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ig,
    Lime,
    Att,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bow,
    Attn,
    Oracle,
}

impl ModelArg {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelArg::Bow => "bow",
            ModelArg::Attn => "attn",
            ModelArg::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum RationaleSource {
    /// Top-k tokens of the score maps.
    #[default]
    Topk,
    /// Union of the human rationale sets.
    Gold,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Reference model.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// JSON checkpoint for bow/attn; seeded parameters when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Oracle triggers as `token=class,...`.
    #[arg(long)]
    pub triggers: Option<String>,
    /// Embedding dimension for seeded models.
    #[arg(long, default_value_t = crate::refmodels::DEFAULT_DIM)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub input: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub ig_steps: usize,
    #[arg(long, default_value_t = 5000)]
    pub lime_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub lime_keep: usize,
    #[arg(long)]
    pub lime_width: Option<f64>,
    /// Also write the model's full checkpoint here.
    #[arg(long)]
    pub save_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FaithfulnessArgs {
    #[command(flatten)]
    pub input: DatasetArgs,
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Offline probabilities instead of an in-process model.
    #[arg(long, conflicts_with_all = ["model", "checkpoint", "triggers"])]
    pub probs: Option<PathBuf>,
    /// Class names for `--probs`, comma separated, in probability order.
    #[arg(long, requires = "probs")]
    pub classes: Option<String>,
    #[arg(long)]
    pub rlr: Option<f64>,
    #[arg(long, value_enum, default_value_t = MapScope::TopK)]
    pub map_scope: MapScope,
    #[arg(long, value_enum, default_value_t = TopkScope::Segment)]
    pub topk_scope: TopkScope,
    /// Rationale whose sufficiency and comprehensiveness are scored.
    #[arg(long, value_enum, default_value_t = RationaleSource::Topk)]
    pub rationale: RationaleSource,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Bad flag values or combinations; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Run one subcommand. Text meant for the user is written to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(usize::from(cli.jobs))
        .build()?;
    commands::dispatch(cli.command, cli.seed, &pool, stdout)
}

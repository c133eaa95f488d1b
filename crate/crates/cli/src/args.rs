//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypogen_core::model::{EngineConfig, SplitTag};

#[derive(Debug, Parser)]
#[command(
    name = "hypogen",
    version,
    about = "Generate, refine, rank, and evaluate natural-language hypotheses for classification tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bundle a directory of paper documents (one JSON file each) into a corpus file.
    IngestLiterature(IngestLiteratureArgs),
    /// Summarize a corpus into per-paper key findings.
    Summarize(SummarizeArgs),
    /// Generate a hypothesis bank with the chosen method.
    Generate(GenerateArgs),
    /// Merge a trained bank with a literature bank, dropping redundant hypotheses.
    Union(UnionArgs),
    /// Predict labels for one dataset under a single seed.
    Infer(InferArgs),
    /// Evaluate a bank or a baseline over multiple seeds.
    Evaluate(EvaluateArgs),
    /// Evaluate a bank with a different inference backend than the one that built it.
    CrossEval(EvaluateArgs),
}

/// Where model completions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Call the configured backend directly.
    Live,
    /// Call the backend and append every exchange to the fixture file.
    Record,
    /// Serve every request from the fixture file; misses are errors.
    Replay,
}

/// Generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Train on examples alone.
    Hypogenic,
    /// Train on examples with literature-refined regenerations.
    Hyporefine,
    /// Generate from paper summaries alone (unscored).
    Literature,
    /// Generate from the task description alone (unscored).
    ZeroShot,
}

/// Baseline to evaluate instead of a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    /// Instructions only.
    ZeroShot,
    /// Instructions plus seeded demonstrations from the training set.
    FewShot,
}

/// Dataset split tag, recorded in outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    TestInd,
    TestOod,
}

impl From<SplitArg> for SplitTag {
    fn from(value: SplitArg) -> Self {
        match value {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Validation => SplitTag::Validation,
            SplitArg::TestInd => SplitTag::TestInd,
            SplitArg::TestOod => SplitTag::TestOod,
        }
    }
}

/// Flags shared by every command that talks to the gateway.
#[derive(Debug, Args)]
pub struct CommonOpts {
    /// TOML task config: task, engine settings, backend, template file.
    #[arg(long, value_name = "PATH")]
    pub task_config: PathBuf,
    /// Completion source.
    #[arg(long, value_enum, default_value_t = ModeArg::Replay)]
    pub mode: ModeArg,
    /// Fixture file (JSONL): read in replay mode, written in record mode.
    #[arg(long, value_name = "PATH")]
    pub fixtures: Option<PathBuf>,
    /// Override the backend model id from the task config.
    #[arg(long, value_name = "MODEL_ID")]
    pub backend: Option<String>,
    /// Seed for any sampling this command performs (default: the engine seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Engine knobs that may override the task config for one run.
#[derive(Debug, Args, Default)]
pub struct EngineOverrides {
    /// Exploration weight in the reward bonus.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// How many top hypotheses vote per training example.
    #[arg(long)]
    pub k: Option<usize>,
    /// Wrong-example pool size that triggers regeneration.
    #[arg(long)]
    pub w_max: Option<usize>,
    /// Wrong votes needed for an example to join the pool.
    #[arg(long)]
    pub w_hyp: Option<usize>,
    /// Number of examples used for initial generation.
    #[arg(long)]
    pub num_init: Option<usize>,
    /// Bank capacity.
    #[arg(long)]
    pub max_hypotheses: Option<usize>,
    /// Refinement rounds per regenerated batch.
    #[arg(long)]
    pub refine_rounds: Option<usize>,
}

impl EngineOverrides {
    /// Overlay the set flags onto `config`. The caller revalidates.
    pub fn apply(&self, config: &mut EngineConfig) {
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.w_max {
            config.w_max = v;
        }
        if let Some(v) = self.w_hyp {
            config.w_hyp = Some(v);
        }
        if let Some(v) = self.num_init {
            config.num_init = v;
        }
        if let Some(v) = self.max_hypotheses {
            config.capacity = v;
        }
        if let Some(v) = self.refine_rounds {
            config.refine_rounds = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestLiteratureArgs {
    /// Directory of paper documents (*.json with title and text).
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Corpus file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    /// A corpus file from ingest-literature, or a directory of documents.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Summaries file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    #[command(flatten)]
    pub overrides: EngineOverrides,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Training dataset (JSONL); required for hypogenic and hyporefine.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Paper summaries; required for hyporefine and literature.
    #[arg(long, value_name = "PATH")]
    pub summaries: Option<PathBuf>,
    /// How many hypotheses to generate (literature and zero-shot only;
    /// default: the bank capacity).
    #[arg(long)]
    pub count: Option<usize>,
    /// Rewrite each literature hypothesis to be more concrete.
    #[arg(long)]
    pub boost: bool,
    /// Bank file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UnionArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    #[command(flatten)]
    pub overrides: EngineOverrides,
    /// Trained data-driven bank.
    #[arg(long, value_name = "PATH")]
    pub main: PathBuf,
    /// Literature bank.
    #[arg(long, value_name = "PATH")]
    pub literature: PathBuf,
    /// Merged bank file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Bank whose hypotheses drive the predictions.
    #[arg(long, value_name = "PATH")]
    pub bank: PathBuf,
    /// Dataset to label (JSONL).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Split tag recorded for the dataset.
    #[arg(long, value_enum, default_value_t = SplitArg::TestInd)]
    pub split: SplitArg,
    /// Report file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonOpts,
    #[command(flatten)]
    pub overrides: EngineOverrides,
    /// Bank to evaluate.
    #[arg(long, value_name = "PATH", conflicts_with = "baseline")]
    pub bank: Option<PathBuf>,
    /// Baseline to evaluate instead of a bank.
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Evaluation dataset (JSONL).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Split tag recorded for the dataset.
    #[arg(long, value_enum, default_value_t = SplitArg::TestInd)]
    pub split: SplitArg,
    /// Training dataset for few-shot demonstrations.
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Seeds to evaluate under (comma-separated; default: the standard five).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    /// Report file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slotjudge::judge::JudgeMode;

fn parse_mode(s: &str) -> Result<JudgeMode, String> {
    s.parse()
}

#[derive(Debug, Parser)]
#[command(
    name = "slotjudge",
    version,
    about = "Single-pass multi-requirement judging on synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data file (JSON lines).
    GenData(GenDataArgs),
    /// Train a model from scratch on a data file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on samples and, optionally, pairs.
    Eval(EvalArgs),
    /// Judge every record of an input file.
    Judge(JudgeArgs),
    /// Rank scene pairs with their score expressions.
    Rerank(RerankArgs),
    /// Compare judging modes by pass count and wall-clock time.
    Bench(BenchArgs),
    /// Smoke pipeline: gen-data, train, eval, rerank, bench.
    E2e(E2eArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// Literal samples with balanced properties.
    Train,
    /// Two-property dependency samples.
    #[value(alias = "dependency")]
    Dep,
    /// Literal and dependency samples at the world's dependency ratio.
    Mixed,
    /// Scene pairs with score expressions.
    Pairs,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "train")]
    pub kind: DataKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// World configuration (TOML or JSON); defaults apply when omitted.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the world's vocabulary to this file.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Flat TrainConfig fields (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ModelConfig fields (TOML or JSON).
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics history CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Pair file for the ranking error.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value = "single", value_parser = parse_mode)]
    pub mode: JudgeMode,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-position accuracy CSV; defaults to `<out>.positions.csv`.
    #[arg(long)]
    pub positions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "single", value_parser = parse_mode)]
    pub mode: JudgeMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Per-pair CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Requirement counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 5, 10, 20])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Templates per repeat.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// CSV table.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct E2eArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Working directory for all artifacts.
    #[arg(long)]
    pub dir: PathBuf,
    /// Training samples (before the 6:1 split).
    #[arg(long, default_value_t = 40_000)]
    pub samples: usize,
}

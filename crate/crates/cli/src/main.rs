//! `tat`: generate synthetic data, train, evaluate and run ablation sweeps.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data mismatch,
//! 4 numeric failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tat_core::TatError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(TatError),
}

impl From<TatError> for CliError {
    fn from(e: TatError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                TatError::Config(_) | TatError::Argument(_) | TatError::Io { .. } => 2,
                TatError::Parse { .. } | TatError::Validation(_) | TatError::Sampling(_) | TatError::Data(_) => 3,
                TatError::Numeric { .. } => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "tat", version, about = "Trajectory-aligned tokens for few-shot action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic motion benchmark.
    GenData(GenDataArgs),
    /// Write a freshly initialized checkpoint.
    Init(InitArgs),
    /// Episodic training on the base classes.
    Train(TrainArgs),
    /// Few-shot evaluation on the novel classes.
    Eval(EvalArgs),
    /// Train and evaluate across a sweep of one or more settings.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Benchmark spec (TOML or JSON). Defaults apply when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Default)]
pub struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.model.dim=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Random,
    Length,
    Hod,
}

#[derive(Args, Default)]
pub struct PipelineArgs {
    /// Trajectory budget per video.
    #[arg(long)]
    pub points: Option<usize>,
    /// Query grid size; tracks are regenerated when it differs from the data.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Frames sampled per clip.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Trajectory sampling strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Length bins for `--strategy length`.
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Clusters for `--strategy hod`.
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    /// Dedup distance in pixels; defaults to one grid cell.
    #[arg(long)]
    pub dedup_delta: Option<f64>,
    /// Static patch tokens instead of trajectories.
    #[arg(long)]
    pub no_points: bool,
}

#[derive(Args, Default)]
pub struct ModelArgs {
    /// Hidden dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of transformer blocks.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// MLP hidden expansion.
    #[arg(long)]
    pub mlp_ratio: Option<usize>,
    /// Parameter init seed.
    #[arg(long)]
    pub model_seed: Option<u32>,
}

#[derive(Args, Default)]
pub struct OptimArgs {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Episodes per epoch.
    #[arg(long)]
    pub episodes_per_epoch: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Gradient norm clip; off unless set.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Classes per episode.
    #[arg(long)]
    pub n_way: Option<usize>,
    /// Support videos per class.
    #[arg(long)]
    pub k_shot: Option<usize>,
    /// Query videos per episode.
    #[arg(long)]
    pub n_query: Option<usize>,
    /// Metric loss temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight of the CLS cross-entropy loss.
    #[arg(long)]
    pub lambda_ce: Option<f64>,
    /// Weight of the Bi-MHM metric loss.
    #[arg(long)]
    pub lambda_metric: Option<f64>,
    /// Episode sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSONL training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args)]
pub struct InitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Manifest path; defaults to `<data>/manifest.csv`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Classes per episode.
    #[arg(long)]
    pub n_way: Option<usize>,
    /// Support videos per class.
    #[arg(long)]
    pub k_shot: Option<usize>,
    /// Query videos per episode.
    #[arg(long)]
    pub n_query: Option<usize>,
    /// Evaluation episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Episode sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Result JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Sweep axis: frames, points, grid, strategy or no-points. Repeatable.
    #[arg(long, required = true)]
    pub axis: Vec<String>,
    /// Custom values for a single axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TAT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("TAT_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Init(a) => commands::init(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! The `t2c` command line: render, gen-data, train, eval, ablate, verify.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use t2c_core::captioner::FreezePreset;
use t2c_core::encoders::{FusionKind, QuerySource};

pub mod commands;
pub mod config;
pub mod experiment;

use experiment::EvalSplit;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Core(#[from] t2c_core::Error),
}

impl CliError {
    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
            CliError::Core(e) if e.is_user_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "t2c", version, about = "Trajectory-conditioned driving captions at toy scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a plan into the camera frame; optionally composite it over an image.
    Render(RenderArgs),
    /// Generate a synthetic corpus with a JSON-lines manifest.
    GenData(GenDataArgs),
    /// Train one captioner variant.
    Train(TrainArgs),
    /// Score a checkpoint on a split.
    Eval(EvalArgs),
    /// Train cross-attention with image and with trajectory queries and compare.
    Ablate(AblateArgs),
    /// Run the gradient, metric-oracle, shape and golden-image checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory [default: ./runs/<timestamp>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed (overrides the config and T2C_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Trajectory plan JSON
    #[arg(long)]
    pub plan: PathBuf,
    /// Camera calibration JSON
    #[arg(long)]
    pub calib: PathBuf,
    /// Camera image (PPM) to composite the trajectory over
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Number of standard samples
    #[arg(long)]
    pub standard: Option<usize>,
    /// Number of ambiguous pairs (two samples each)
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Camera calibration JSON [default: built-in 64x64 camera]
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub fusion: Option<FusionKind>,
    /// Query side for cross-attention fusion
    #[arg(long)]
    pub xattn_query: Option<QuerySource>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// none, paper-freeze or all
    #[arg(long)]
    pub freeze: Option<FreezePreset>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Data directory or manifest (overrides data_dir)
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`
    #[arg(long, required_unless_present = "echo")]
    pub checkpoint: Option<PathBuf>,
    /// Data directory or manifest
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: EvalSplit,
    /// Score the references against themselves instead of a model
    #[arg(long)]
    pub echo: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Data directory or manifest; generated from the config when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Seeds per block in the gradient battery
    #[arg(long, default_value_t = 100)]
    pub grad_seeds: u64,
    /// Random pairs for the metric oracles
    #[arg(long, default_value_t = 1000)]
    pub oracle_pairs: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Render(a) => commands::render(&a),
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Verify(a) => commands::verify(&a),
    }
}

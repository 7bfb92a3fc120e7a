//! Command-line front end: `gen`, `train`, `embed`, `probe`, `mad` and
//! `bench`. Every command validates and loads its inputs before it creates
//! any output, writes machine-readable files and prints one summary line.

mod commands;
mod model;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{bench_sampling, BenchRow};
pub use model::{checkpoint_name, load_model, save_model, LayerEntry, Manifest, Mode, MANIFEST};
pub use settings::{Settings, KNOWN_KEYS};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "lrgi", version, about = "Layer-wise self-supervised GNN training")]
pub struct Cli {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic block model dataset.
    Gen(GenArgs),
    /// Train an encoder layer-wise or end to end.
    Train(TrainArgs),
    /// Write node embeddings of a trained encoder.
    Embed(EmbedArgs),
    /// Fit a linear probe on embeddings or raw features.
    Probe(ProbeArgs),
    /// Per-layer mean average distance between neighbor embeddings.
    Mad(MadArgs),
    /// Measure per-batch node and edge counts of both batching schemes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory for the dataset files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub nodes_per_block: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub feature_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding edges.txt, features.txt and optionally labels.txt
    /// and splits.txt.
    #[arg(long)]
    pub data: PathBuf,
    /// Keep edges one-directional instead of symmetrizing them.
    #[arg(long)]
    pub directed: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for checkpoints, loss files and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub leaky_slope: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Neighbors per node for the encoder; -1 takes all.
    #[arg(long, allow_negative_numbers = true)]
    pub conv_fanout: Option<i64>,
    /// Neighbors per node for the propagated view; -1 takes all.
    #[arg(long, allow_negative_numbers = true)]
    pub prop_fanout: Option<i64>,
    #[arg(long)]
    pub prop_steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    #[arg(long)]
    pub lambda_var: Option<f64>,
    #[arg(long)]
    pub lambda_cov: Option<f64>,
    /// Batches prepared ahead of the optimizer; 0 disables the worker.
    #[arg(long)]
    pub prefetch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Output file, one embedding row per node.
    #[arg(long)]
    pub out: PathBuf,
    /// Sample this many neighbors per layer instead of using all of them.
    #[arg(long, allow_negative_numbers = true)]
    pub fanout: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model directory written by `train`.
    #[arg(long, required_unless_present = "raw", conflicts_with = "raw")]
    pub model: Option<PathBuf>,
    /// Probe the raw node features instead of embeddings.
    #[arg(long)]
    pub raw: bool,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub probe_epochs: Option<usize>,
    #[arg(long)]
    pub probe_lr: Option<f64>,
    #[arg(long)]
    pub probe_weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MadArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV with columns `layer,mad`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated encoder depths to measure.
    #[arg(long)]
    pub depths: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub conv_fanout: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    pub prop_fanout: Option<i64>,
    /// Batches averaged per measurement.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let summary = match cli.command {
        Command::Gen(a) => commands::gen(&a, &settings)?,
        Command::Train(a) => commands::train(&a, &settings)?,
        Command::Embed(a) => commands::embed(&a, &settings)?,
        Command::Probe(a) => commands::probe(&a, &settings)?,
        Command::Mad(a) => commands::mad(&a, &settings)?,
        Command::Bench(a) => commands::bench(&a, &settings)?,
    };
    println!("{}", summary);
    Ok(())
}

/// Parses `args` (program name first) and runs them, mapping errors to a
/// nonzero exit code with a message on stderr.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}

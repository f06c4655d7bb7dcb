//! Command-line front end. JSON goes to stdout, progress text to stderr.

mod artifacts;
mod commands;
mod config;

pub use artifacts::{read_embeddings_csv, write_embeddings, EMBEDDINGS_CSV, EMBEDDINGS_JSON};
pub use config::{DataSource, RunConfig};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::data::TripMode;
use crate::error::{DataError, EvalError, MathError, TrainError};
use crate::graph::View;
use crate::training::AblationVariant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Math(#[from] MathError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Train(TrainError::Config(_)) => EXIT_USAGE,
            CliError::Train(_) | CliError::Math(_) => EXIT_NUMERIC,
            CliError::Eval(EvalError::LengthMismatch(..)) => EXIT_DATA,
            CliError::Eval(EvalError::NonFinite(_)) => EXIT_NUMERIC,
            CliError::Eval(EvalError::Invalid(_)) => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "regionembed", version, about = "Multi-view urban region embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic city as CSV files plus a manifest.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train on a dataset and export checkpoint, loss log and embeddings.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Also write each raw and cleansed graph as an N x N CSV.
        #[arg(long)]
        dump_graphs: bool,
    },
    /// Recompute embeddings from a checkpoint.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint JSON written by `train`.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Run the regression and clustering tasks on exported embeddings.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Embedding CSV written by `train` or `embed`.
        #[arg(long, value_name = "PATH")]
        embeddings: PathBuf,
        /// Write `region_id,cluster` rows here.
        #[arg(long, value_name = "PATH")]
        assignments: Option<PathBuf>,
    },
    /// Time memory fusion against quadratic self-attention.
    Benchmark {
        /// Comma-separated region counts.
        #[arg(long, value_delimiter = ',', default_value = "256,1024")]
        sizes: Vec<usize>,
        /// Samples per size; the median is reported.
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Embedding width.
        #[arg(long, default_value_t = 144)]
        dim: usize,
        /// Memory slots per view.
        #[arg(long, default_value_t = 32)]
        memory: usize,
        /// Seed for the random inputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the full model and each ablation, then evaluate all of them.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for generation, initialization, folds and clustering.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory holding trips.csv, poi.csv, checkins.csv, targets.csv and
    /// optionally regions.csv.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["regions", "districts", "trips", "noise", "poi_cats", "checkin_cats", "trip_mode"])]
    pub data: Option<PathBuf>,
    /// Region count when the data directory has no regions.csv.
    #[arg(long, requires = "data")]
    pub n_regions: Option<usize>,
    /// Synthetic region count.
    #[arg(long)]
    pub regions: Option<usize>,
    /// Planted districts in the synthetic city.
    #[arg(long)]
    pub districts: Option<usize>,
    /// Synthetic trip count.
    #[arg(long)]
    pub trips: Option<usize>,
    /// Share of synthetic trips and counts drawn outside the district pattern.
    #[arg(long)]
    pub noise: Option<f64>,
    /// POI category count.
    #[arg(long)]
    pub poi_cats: Option<usize>,
    /// Check-in category count.
    #[arg(long)]
    pub checkin_cats: Option<usize>,
    /// `mixed` or `deterministic` destinations.
    #[arg(long, value_parser = parse_trip_mode)]
    pub trip_mode: Option<TripMode>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Full-batch training steps.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Embedding width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Attention heads per view; must divide the width.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Memory slots per view.
    #[arg(long)]
    pub memory: Option<usize>,
    /// Blend between a view's own embedding and the fused one.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decoupled weight decay.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// w/o-GCL, w/o-MGAM, w/o-AFM or w/o-DSGF; repeatable.
    #[arg(long, value_name = "NAME")]
    pub ablate: Vec<AblationVariant>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Cross-validation folds (at least 3).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Cluster count; defaults to the number of land-use labels.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Evaluate one view (O, D, F or S) instead of the concatenation.
    #[arg(long, value_parser = parse_view)]
    pub view: Option<View>,
}

fn parse_trip_mode(s: &str) -> Result<TripMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "mixed" => Ok(TripMode::Mixed),
        "deterministic" => Ok(TripMode::Deterministic),
        _ => Err(format!("unknown trip mode `{s}` (mixed or deterministic)")),
    }
}

fn parse_view(s: &str) -> Result<View, String> {
    View::from_tag(s).ok_or_else(|| format!("unknown view `{s}` (O, D, F or S)"))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use partseg_core::condnet::Conditioning;

use crate::config::{AdjacencyFlags, ShapeArg, WeightFlags};

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: SEGMAP v1, PROB v1, TPRM v1)"
);

/// Part-adjacency graphs, graph-matching losses and segmentation metrics.
#[derive(Debug, Parser)]
#[command(name = "partseg", version = VERSION)]
pub struct Cli {
    /// Worker threads (outputs do not depend on this)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub run_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Binary dilation of the nonzero labels of a map
    Dilate(DilateArgs),
    /// Part-adjacency matrix of a label map
    Graph(GraphArgs),
    /// Cross-entropy, reconstruction and graph-matching losses of a prediction
    Loss(LossArgs),
    /// IoU / accuracy metrics over a directory of predictions
    Metrics(MetricsArgs),
    /// Train the toy conditioned network on synthetic scenes
    TrainToy(TrainArgs),
    /// Write synthetic scenes
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DilateArgs {
    #[arg(long = "in", value_name = "MAP")]
    pub input: PathBuf,
    #[arg(long)]
    pub radius: usize,
    #[arg(long, value_enum, default_value = "square")]
    pub shape: ShapeArg,
    /// Output map (.segmap or .pgm); plain PGM on stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long = "in", value_name = "MAP")]
    pub input: PathBuf,
    /// Number of part classes (defaults to the map's class count)
    #[arg(long)]
    pub parts: Option<usize>,
    #[command(flatten)]
    pub adjacency: AdjacencyFlags,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: GraphFormat,
    /// Print raw counts instead of the row-normalised matrix
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Predicted probabilities (.probmap)
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth part labels
    #[arg(long)]
    pub gt: PathBuf,
    /// Label-set JSON with the parts-to-objects boundaries
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub adjacency: AdjacencyFlags,
    #[command(flatten)]
    pub weights: WeightFlags,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub labelset: Option<PathBuf>,
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl MetricsArgs {
    pub fn format(&self) -> TableFormat {
        if self.csv {
            TableFormat::Csv
        } else {
            TableFormat::Json
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConditioningArg {
    Multi,
    Single,
    Off,
}

impl From<ConditioningArg> for Conditioning {
    fn from(c: ConditioningArg) -> Self {
        match c {
            ConditioningArg::Multi => Conditioning::Multi,
            ConditioningArg::Single => Conditioning::Single,
            ConditioningArg::Off => Conditioning::Off,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Network configuration JSON
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene specification JSON for the training data
    #[arg(long)]
    pub scene_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    /// Scenes scored after training (seeded past the training scenes)
    #[arg(long, default_value_t = 0)]
    pub held_out: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Network initialisation and batch-order seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub conditioning: Option<ConditioningArg>,
    #[command(flatten)]
    pub adjacency: AdjacencyFlags,
    #[command(flatten)]
    pub weights: WeightFlags,
    /// Per-step loss trace (CSV)
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Trained parameters (TPRM)
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

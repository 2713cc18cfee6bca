//! Command-line surface. Defaults mirror the full-scale training recipe:
//! depth-8 octrees, 8×2×3+1 kernels, 30K points per sample, SGD with
//! lr 0.1 / batch 16 / 100 epochs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "sphconv",
    version,
    about = "Spherical convolution networks over octree-partitioned point clouds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Sample OFF meshes into normalized point-cloud caches.
    Ingest(IngestArgs),
    /// Train a classifier on an ingested or synthetic dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Neighborhood-structuring scalability benchmark / inference timing.
    Bench(BenchArgs),
    /// Export per-layer neuron locations + features, or kernel weights.
    Export(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// Mesh dataset root: <root>/<class>/<train|test>/<name>.off
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for caches + index.csv + manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Points sampled per mesh.
    #[arg(long, default_value_t = 30000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Ingested dataset directory (mutually exclusive with --synthetic).
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on the built-in synthetic shape dataset.
    #[arg(long)]
    pub synthetic: bool,
    /// Output directory (checkpoints, history.csv, manifest).
    #[arg(long)]
    pub out: PathBuf,
    /// Octree depth (hidden layers).
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    /// Kernel bins as n,p,q.
    #[arg(long, default_value = "8,2,3", value_parser = parse_kernel)]
    pub kernel: (usize, usize, usize),
    /// Per-layer channel widths; length must equal --depth.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 32, 64, 64, 128, 128, 256, 512])]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    /// Literal published recipe: momentum 0.0005, no weight decay.
    #[arg(long)]
    pub strict_paper: bool,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expand the training set ×5 with subsampling/rotation/noise replicas.
    #[arg(long)]
    pub augment: bool,
    /// Points per synthetic sample.
    #[arg(long, default_value_t = 30000)]
    pub points: usize,
    /// Synthetic samples per class (80/20 train/test split).
    #[arg(long, default_value_t = 125)]
    pub per_class: usize,
    /// Synthetic jitter sigma.
    #[arg(long, default_value_t = 0.01)]
    pub synthetic_noise: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
    /// Checkpoint every N epochs (0 = final only).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Evaluate the test split every N epochs (0 = never).
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Disable data-parallel batch execution.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: bool,
    /// Split to evaluate: train or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30000)]
    pub points: usize,
    #[arg(long, default_value_t = 125)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.01)]
    pub synthetic_noise: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Point counts, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 50_000, 100_000, 200_000])]
    pub sizes: Vec<usize>,
    /// Strategies: octree, kdtree, knn_bruteforce, range_search.
    #[arg(long, value_delimiter = ',', default_values_t = ["octree".to_string(), "kdtree".to_string(), "knn_bruteforce".to_string(), "range_search".to_string()])]
    pub strategies: Vec<String>,
    /// CSV output path (rows flushed as they finish).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional gnuplot-style matrix output.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// K for brute-force K-NN and the range-search density target.
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run strategies data-parallel (timings then reflect parallel speed).
    #[arg(long)]
    pub parallel: bool,
    /// Time octree construction + forward pass per sample instead of the
    /// neighborhood strategies.
    #[arg(long)]
    pub inference: bool,
    /// Channels for the inference-timing model; length must equal --depth.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 32, 64, 64, 128, 128, 256, 512])]
    pub channels: Vec<usize>,
    /// Kernel bins as n,p,q (inference timing).
    #[arg(long, default_value = "8,2,3", value_parser = parse_kernel)]
    pub kernel: (usize, usize, usize),
}

#[derive(Args, Debug, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// OFF mesh to sample and classify.
    #[arg(long, conflicts_with = "synthetic_sample")]
    pub input: Option<PathBuf>,
    /// Synthetic sample class: sphere, cube, cylinder, torus.
    #[arg(long)]
    pub synthetic_sample: Option<String>,
    /// Layer to export (0 = raw points); omit for all layers.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Output path; .ply writes a point cloud, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-bin kernel weight norms to this CSV.
    #[arg(long)]
    pub kernel_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
}

fn parse_kernel(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected n,p,q".into());
    }
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

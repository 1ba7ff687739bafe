use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wconv_core::experiments::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "wconv", version, about = "Weighted convolution: training, density search and checks")]
pub struct Cli {
    /// Seed for data generation and weight initialisation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives all output files.
    #[arg(long, global = true, env = "WCONV_OUT_DIR", default_value = "wconv-out")]
    pub out_dir: PathBuf,
    /// TOML file with [model], [dataset] and [direct] tables; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic denoising dataset.
    GenData(GenDataArgs),
    /// Train the model once with a fixed density.
    Train(TrainArgs),
    /// Search the density that minimises the final training loss.
    OptimizeDensity(OptimizeArgs),
    /// Repeat the density search along one hyperparameter.
    Sweep(SweepArgs),
    /// Train under several densities and compare losses.
    CompareDensities(CompareArgs),
    /// Time standard, weighted and premultiplied convolutions.
    Bench(BenchArgs),
    /// Check the algebraic properties of the weighted convolution.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::OptimizeDensity(_) => "optimize-density",
            Command::Sweep(_) => "sweep",
            Command::CompareDensities(_) => "compare-densities",
            Command::Bench(_) => "bench",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Read noisy.wct and clean.wct from this directory instead of generating.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n_images: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub smoothness: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct DirectArgs {
    #[arg(long)]
    pub max_evals: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub f_tol: Option<f64>,
    #[arg(long)]
    pub stall_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Named density: uniform, linear, gaussian or cubic.
    #[arg(long, conflicts_with = "alpha")]
    pub density: Option<String>,
    /// Symmetric generating vector, all K entries, e.g. 0.4,1,0.4.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub kernel: usize,
    /// Run the two asymmetric 3x3 searches instead of the symmetric one.
    #[arg(long)]
    pub relax_symmetry: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub direct: DirectArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// stride, epochs, n_images, image_size or channels.
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub direct: DirectArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Families to compare; `optimal` is searched on the training split
    /// unless --optimal-alpha is given.
    #[arg(long, value_delimiter = ',', default_value = "uniform,linear,gaussian,cubic,optimal")]
    pub families: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub optimal_alpha: Option<Vec<f64>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub direct: DirectArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    pub kernels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,6")]
    pub out_channels: Vec<usize>,
    /// Input shape batch,channels,rows,cols.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "2,3,128,128")]
    pub image: Vec<usize>,
    #[arg(long, default_value_t = 15)]
    pub repeats: usize,
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let d = &mut cfg.dataset;
        set(&mut d.n_images, self.n_images);
        set(&mut d.rows, self.rows);
        set(&mut d.cols, self.cols);
        set(&mut d.noise_sigma, self.noise_sigma);
        set(&mut d.smoothness, self.smoothness);
    }
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let m = &mut cfg.model;
        set(&mut m.channels, self.channels);
        set(&mut m.stride, self.stride);
        set(&mut m.epochs, self.epochs);
        set(&mut m.learning_rate, self.learning_rate);
        if self.batch_size.is_some() {
            m.batch_size = self.batch_size;
        }
    }
}

impl DirectArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let d = &mut cfg.direct;
        set(&mut d.max_evals, self.max_evals);
        set(&mut d.max_iters, self.max_iters);
        set(&mut d.f_tol, self.f_tol);
        set(&mut d.stall_iters, self.stall_iters);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

use std::path::PathBuf;

use bdqmap_core::experiment::ExperimentOverrides;
use bdqmap_core::{Convention, Scale};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bdqmap", version, about = "Quantized-MAP despeckling of 1-D piecewise-constant signals")]
pub struct Cli {
    /// TOML file with experiment settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write speckled test signals and their segment sidecars.
    Gen(Common),
    /// Train (or compute analytically) a weight table and write it as JSON.
    TrainWeights(TrainArgs),
    /// Despeckle one signal file with one method.
    Despeckle(DespeckleArgs),
    /// Run a benchmark and write its CSV files.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// PSNR of every method for every q0.
    Table1(Common),
    /// PSNR against lambda on the validation signals.
    LambdaSweep(Common),
    /// Lower bound against genie-aided and quantized-MAP estimates.
    BoundCurve(Common),
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Jump probability; a comma-separated list where the command allows it.
    #[arg(long, value_delimiter = ',')]
    pub q0: Option<Vec<f64>>,
    /// Signal length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of test signals.
    #[arg(long)]
    pub signals: Option<usize>,
    /// Quantizer bit depth; a comma-separated list where the command allows it.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<u32>>,
    /// Pattern length of the weight table.
    #[arg(long)]
    pub k: Option<usize>,
    /// Fixed lambda instead of the validation search.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Preset sizes: desk (n = 1e4, 20 signals) or paper (n = 1e5, 100 signals).
    #[arg(long)]
    pub scale: Option<Scale>,
    /// Weight table JSON to use instead of training one.
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    /// Output directory, or output file for train-weights and despeckle.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Constants used for the reported bound.
    #[arg(long)]
    pub convention: Option<Convention>,
}

impl Common {
    pub fn overrides(&self) -> ExperimentOverrides {
        ExperimentOverrides {
            scale: self.scale,
            q0: self.q0.clone(),
            n: self.n,
            num_signals: self.signals,
            seed: self.seed,
            bits: self.b.clone(),
            k: self.k,
            lambda: self.lambda,
            weights: self.weights.clone(),
            convention: self.convention,
            output_dir: self.out.clone(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of training samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Exact pair probabilities of the Markov source instead of counts (k = 2 only).
    #[arg(long)]
    pub analytic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DespeckleMethod {
    Speckled,
    Boxcar,
    Frost,
    Tv,
    Lee,
    EnhancedLee,
    Kuan,
    EnhancedKuan,
    BdqmapB,
    Bdqmap,
    /// Closed form for the spike-slab source; the spike sits at x_min.
    Memoryless,
}

#[derive(Debug, Args)]
pub struct DespeckleArgs {
    /// Signal CSV with columns index,x,y (x may be empty).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "bdqmap")]
    pub method: DespeckleMethod,
    /// Weight of the log-domain TV filter.
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "rdperm",
    version,
    about = "Randomization inference for regression discontinuity designs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Specification tests, then effect test, confidence interval and HL estimate.
    Analyze(AnalyzeArgs),
    /// Residualized covariate balance in a window.
    Balance(BalanceArgs),
    /// Density test at the cutoff.
    Mccrary(McCraryArgs),
    /// Bandwidth selection by testing in order, with optional sorter exclusion.
    SelectWindow(SelectArgs),
    /// Specification tests and effect inference for every candidate bandwidth.
    RobustnessTable(RobustnessArgs),
    /// Binned means and frequency tables for plotting.
    Plotdata(PlotArgs),
    /// Run Monte Carlo experiments from a JSON configuration file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreatedSide {
    /// Treated when r <= cutoff.
    Below,
    /// Treated when r > cutoff.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Constant,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatArg {
    DiffMeans,
    AbsDiffMeans,
    SumCross,
    RankStudentized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Donut,
    Surgical,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Running-variable column.
    #[arg(long)]
    pub running: String,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Covariate columns, comma separated; `name:binary` forces a logistic
    /// model, `name:logit` fits a line to the logit of a proportion.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: f64,
    #[arg(long, value_enum, default_value_t = TreatedSide::Below)]
    pub treated: TreatedSide,
    /// Subtract the cutoff from the running variable before analysis.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowArgs {
    /// Bandwidth below the cutoff (default: unbounded).
    #[arg(long)]
    pub window_left: Option<f64>,
    /// Bandwidth above the cutoff (default: unbounded).
    #[arg(long)]
    pub window_right: Option<f64>,
    /// Running-variable values to leave out, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub exclude: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    /// Monte Carlo permutations when enumeration is too large.
    #[arg(long, default_value_t = 100_000)]
    pub permutations: u64,
    /// Enumerate all assignments when there are at most this many.
    #[arg(long, default_value_t = 200_000)]
    pub max_exact: u64,
    /// Seed for every random draw; required.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Linear)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = StatArg::DiffMeans)]
    pub stat: StatArg,
    /// Test the upper tail only instead of two-sided.
    #[arg(long)]
    pub upper_tail: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Worker threads (default: all cores); results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV output path (a directory for `plotdata`).
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    /// Histogram bin width for the density test (default: automatic).
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Local linear bandwidth for the density test (default: plug-in).
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_f: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_g: f64,
    /// Also test this constant effect.
    #[arg(long, allow_hyphen_values = true)]
    pub tau0: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_f: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McCraryArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_g: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Candidate bandwidths, comma separated, strictly decreasing
    /// (default: grid from the widest symmetric window down).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_f: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_g: f64,
    /// Evaluate every candidate instead of stopping at the first sustained one.
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Sorter-exclusion strategy applied before the bandwidth sweep.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// JSON file with the surgical hypotheses: a list of lists of r-values.
    #[arg(long)]
    pub hypotheses: Option<PathBuf>,
    /// Donut step in r-units (default: lattice unit or range / 100).
    #[arg(long)]
    pub donut_step: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Bin width for the binned means (default: automatic).
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Experiment configuration (JSON).
    pub config: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tvdar::descriptive::{CiMode, RhoMode};
use tvdar::montecarlo::Target;
use tvdar::{IntervalKind, KernelKind, NoiseDistribution};

use crate::config::Demean;

/// Time-varying double autoregressive models for daily price series.
#[derive(Debug, Parser)]
#[command(name = "tvdar", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a DAR(1) or time-varying DAR(1) path and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a constant-parameter DAR(1) by quasi-maximum likelihood.
    Fit(FitArgs),
    /// Kernel-weighted local fits on a grid of rescaled times.
    FitLocal(FitLocalArgs),
    /// Lyapunov exponent and xi stability measures.
    Stability(StabilityArgs),
    /// Rolling one-step-ahead forecasts with prediction intervals.
    Forecast(ForecastArgs),
    /// Residual diagnostics and stability tests.
    #[command(subcommand)]
    Test(TestCommand),
    /// Rolling moments, autocorrelations and AR(1) baseline.
    Describe(DescribeArgs),
    /// Sampling distributions of the estimators by simulation.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Subcommand)]
pub enum TestCommand {
    /// Ljung-Box on full-sample and rolling-window standardized residuals.
    Whiteness(WhitenessArgs),
    /// Test for a constant variance function.
    Homoscedasticity(HomoscedasticityArgs),
    /// Wald test on xi = phi^2 + alpha.
    Xi(XiArgs),
}

/// Options every command accepts. A `--config` file (TOML, or JSON such as
/// a previous `report.json`) supplies values for any option; when a flag and
/// the file both set a value, whichever comes later on the command line wins.
#[derive(Debug, Args, Serialize)]
pub struct Common {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory for report.json and plot-data CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional `date,label` CSV merged into dated plot tables.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Worker threads; defaults to TVDAR_THREADS, then the core count.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct Input {
    /// `date,close[,volume]` CSV; `-` reads standard input.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// How the price is centred before fitting.
    #[arg(long)]
    pub demean: Option<Demean>,
    /// Window length for local means and rolling statistics.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct Optim {
    /// Optimizer starting points.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Simplex size at which the optimizer stops.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for the perturbed starting points.
    #[arg(long)]
    pub fit_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct Local {
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Bandwidth as a fraction of the sample.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Number of evenly spaced grid points in [0, 1].
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Start every grid point from scratch instead of the previous optimum.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub cold: Option<bool>,
    /// Confidence level for bands and intervals.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<NoiseDistribution>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Level added to the simulated path, such as a peg of 1.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    /// First date of the written series (yyyy-mm-dd).
    #[arg(long)]
    pub start_date: Option<String>,
    /// Where to write the series; `-` writes to standard output.
    #[arg(long)]
    pub series_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
}

#[derive(Debug, Args, Serialize)]
pub struct FitLocalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[command(flatten)]
    #[serde(flatten)]
    pub smoothing: Local,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[command(flatten)]
    #[serde(flatten)]
    pub smoothing: Local,
    /// Declared innovation law for the exact exponent.
    #[arg(long)]
    pub known_noise: Option<NoiseDistribution>,
    /// Also compute local exponents and local xi intervals.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub local: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub interval: Option<IntervalKind>,
    /// Centre windows on this level instead of their own mean.
    #[arg(long, allow_hyphen_values = true)]
    pub fixed_mean: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct WhitenessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[arg(long)]
    pub lags: Option<usize>,
    /// Test size.
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct HomoscedasticityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[command(flatten)]
    #[serde(flatten)]
    pub smoothing: Local,
    /// Upper-quantile fractions; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct XiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    /// Boundary value under the null.
    #[arg(long)]
    pub xi0: Option<f64>,
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct DescribeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: Input,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub ci_mode: Option<CiMode>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub rho_mode: Option<RhoMode>,
}

#[derive(Debug, Args, Serialize)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sample sizes; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub t_values: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<NoiseDistribution>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<Target>>,
    /// Also tabulate the Lyapunov exponent over a phi by alpha grid.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub surface: Option<bool>,
    #[arg(long)]
    pub surface_noise: Option<NoiseDistribution>,
}

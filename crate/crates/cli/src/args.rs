use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Mass-event RAN forecasting and spectrum planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a season of synthetic traces.
    Simulate(SimulateArgs),
    /// Correlations, peak-to-average ratios and saturation estimates.
    Analyze(AnalyzeArgs),
    /// Fit one forecaster on the chronological split.
    #[command(alias = "forecast")]
    TrainForecaster(ForecastArgs),
    /// Refit before every held-out day and report its errors.
    WalkForward(ForecastArgs),
    /// Train per-sector capacity models.
    TrainArena(TrainArenaArgs),
    /// Capacity plan of one sector for one event.
    Recommend(RecommendArgs),
    /// Same as `train-arena` / `recommend`.
    #[command(subcommand)]
    Arena(ArenaCommand),
    /// Online primal-dual capacity control.
    Bco(BcoArgs),
    /// Finite-difference check of every layer kind.
    Gradcheck(GradcheckArgs),
    /// simulate, analyze, train and recommend in one go.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Subcommand)]
pub enum ArenaCommand {
    Train(TrainArenaArgs),
    Recommend(RecommendArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of regular days.
    #[arg(long, default_value_t = 20)]
    pub regular: usize,
    /// Event list (JSON array or TOML `[[events]]`); overrides --n-events.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Football matches spread through the season when no event file is given.
    #[arg(long, default_value_t = 12)]
    pub n_events: usize,
    /// TOML scenario mapping onto the generator parameters.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub sectors: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Trace file written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub util_threshold: f64,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Arima,
    Lstm,
    CnnLstm,
    ConvLstm,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ForecastArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `enb-sector-band`; the first sector when omitted.
    #[arg(long)]
    pub sector: Option<String>,
    #[arg(long, value_enum, default_value = "cnn-lstm")]
    pub model: ModelName,
    #[arg(long, default_value_t = 200)]
    pub units: usize,
    #[arg(long, default_value_t = 64)]
    pub filters: usize,
    /// ARIMA order; grid search over p<=5, d<=2, q<=5 when any is omitted.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub window_days: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub refit_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArenaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Event list replacing the one stored next to the traces.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Comma-separated `enb-sector-band` ids; every sector when omitted.
    #[arg(long)]
    pub sectors: Option<String>,
    /// Train/held-out share of events, e.g. `60/40`.
    #[arg(long, default_value = "60/40")]
    pub split: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub eta: usize,
    #[arg(long, default_value_t = 128)]
    pub mu: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecommendArgs {
    /// Output directory of `train-arena`.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sector: String,
    /// Day of an event listed with the traces.
    #[arg(long, conflicts_with = "event")]
    pub event_day: Option<u32>,
    /// Event context as a JSON object or a path to one.
    #[arg(long)]
    pub event: Option<String>,
    /// Feed the regular-day QoS profile instead of the observed QoS.
    #[arg(long)]
    pub regular_qos: bool,
    /// Plan file; standard output when omitted.
    #[arg(short, long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcoEnvName {
    Testbed,
    Sim,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BcoArgs {
    /// Optional `run` verb.
    #[arg(value_parser = ["run"], hide = true)]
    #[serde(skip)]
    pub action: Option<String>,
    #[arg(long, value_enum, default_value = "testbed")]
    pub env: BcoEnvName,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Use exact constraint gradients instead of one-point estimates.
    #[arg(long)]
    pub exact: bool,
    /// Observation noise of the testbed.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Trace file for `--env sim`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated sectors for `--env sim`; every sector when omitted.
    #[arg(long)]
    pub sectors: Option<String>,
    /// Day replayed by `--env sim`; the first event day when omitted.
    #[arg(long)]
    pub day: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Also write the table here.
    #[arg(short, long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproduceArgs {
    /// TOML pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    #[serde(skip)]
    pub out: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lingam_id::certify::{EffectKind, Setting};

#[derive(Debug, Parser)]
#[command(
    name = "lingam-id",
    version,
    about = "Identifiability and estimation of causal effects in linear non-Gaussian models with latent confounders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether a causal effect is generically identifiable.
    Certify(CertifyArgs),
    /// Sample a random canonical graph with edge weights.
    Generate(GenerateArgs),
    /// Draw samples from a weighted model.
    Simulate(SimulateArgs),
    /// Estimate edge weights of a known graph from data.
    Estimate(EstimateArgs),
    /// Run a benchmark protocol and write long-form CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Tce,
    Dce,
    Matrix,
}

impl From<KindArg> for EffectKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Tce => EffectKind::Tce,
            KindArg::Dce => EffectKind::Dce,
            KindArg::Matrix => EffectKind::Matrix,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SettingArg {
    Known,
    Unknown,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Known => Setting::Known,
            SettingArg::Unknown => Setting::Unknown,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Graph JSON (a model JSON is accepted too).
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Cause, by name or id; not used for `matrix`.
    #[arg(long)]
    pub source: Option<String>,
    /// Effect, by name or id; not used for `matrix`.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "known")]
    pub setting: SettingArg,
    /// Also run the brute-force permutation oracle and report agreement.
    #[arg(long)]
    pub oracle: bool,
    /// Largest graph the oracle will enumerate.
    #[arg(long, default_value_t = lingam_id::oracle::DEFAULT_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub po: usize,
    #[arg(long, default_value_t = 1)]
    pub pl: usize,
    #[arg(long, default_value_t = 0.5)]
    pub prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smallest weight magnitude.
    #[arg(long, default_value_t = 0.5)]
    pub lo: f64,
    /// Largest weight magnitude.
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Laplace,
    Exponential,
    Uniform,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "laplace")]
    pub noise: NoiseArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-node noise multiplier, `NODE=FACTOR`; repeatable.
    #[arg(long = "scale", value_name = "NODE=FACTOR")]
    pub scales: Vec<String>,
    /// Use the tanh mechanism with this edge entering its child linearly,
    /// given as `FROM:TO`.
    #[arg(long, value_name = "FROM:TO")]
    pub tanh_target: Option<String>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    Marginal,
    Transpose,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Lbfgs,
    Adam,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Graph JSON (a model JSON is accepted too; its weights are ignored).
    #[arg(long)]
    pub graph: PathBuf,
    /// CSV whose header names the observed node ids.
    #[arg(long)]
    pub data: PathBuf,
    /// Estimator configuration (TOML or JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Sharpness of the smooth absolute-value contrast.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Protocol file (TOML, or JSON by extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run a protocol with its default grid instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub protocol: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to `LINGAM_ID_WORKERS`, then to the number
    /// of cores.
    #[arg(long, env = "LINGAM_ID_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

//! `regime`: command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid flags or config,
//! 3 malformed CSV, 4 insufficient data. Failures print one JSON object
//! `{"error": .., "code": ..}` to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Invalid flag values or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "regime",
    version,
    about = "Regime decoding, forecasting and flow networks for return series"
)]
pub struct Cli {
    /// TOML file with shared settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "REGIME_THREADS")]
    pub threads: Option<usize>,
    /// Include search traces in JSON output.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic series with its true states.
    Simulate(SimulateArgs),
    /// Encode a series as a 0-1 excursion process.
    Encode(EncodeArgs),
    /// Decode hidden states with the threshold-ladder pipeline.
    Decode(DecodeArgs),
    /// Run a replicated simulation study.
    Evaluate(EvaluateArgs),
    /// Fit a hidden Markov model baseline and decode with it.
    Hmm(HmmArgs),
    /// Rolling one-step forecasts by pattern matching.
    Forecast(ForecastArgs),
    /// Transfer-entropy network across several instruments.
    Network(NetworkArgs),
    /// Average-linkage clustering of a flow or dissimilarity matrix.
    Cluster(ClusterArgs),
}

/// Settings shared by commands that run the decoder.
#[derive(Debug, Clone, Args)]
pub struct DecodeOpts {
    /// Quantile levels of the threshold ladder, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
    /// States per threshold row.
    #[arg(long)]
    pub m: Option<usize>,
    /// aic, bic, or a numeric penalty.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum parameter combinations scored per row.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SimKindArg {
    BernoulliChangepoints,
    BernoulliHmm,
    GaussianHmm,
    GmmHmm,
    RegimeGaussian,
    RegimeT,
    Panel,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: SimKindArg,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub p1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p12: f64,
    #[arg(long, default_value_t = 1.0)]
    pub var1: f64,
    #[arg(long, default_value_t = 3.0)]
    pub var2: f64,
    /// Mixture variances `a1,b1,a2,b2` for gmm-hmm.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 1.5])]
    pub mix_vars: Vec<f64>,
    /// Weight of the first mixture component for gmm-hmm.
    #[arg(long, default_value_t = 0.5)]
    pub weight_a: f64,
    /// Panel groups and members per group.
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    #[arg(long, default_value_t = 3)]
    pub per_group: usize,
    /// Output file, or directory for panels; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Two-sided thresholds.
    #[arg(long, allow_hyphen_values = true, requires = "upper")]
    pub lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "lower")]
    pub upper: Option<f64>,
    /// One-sided threshold; the sign picks the tail.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["lower", "upper"])]
    pub pi: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub opts: DecodeOpts,
    /// Cluster count; chosen by silhouette when omitted.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Decode a single two-sided threshold pair instead of the ladder.
    #[arg(long, allow_hyphen_values = true, requires = "upper")]
    pub lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "lower")]
    pub upper: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write tidy CSVs for plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    /// Bernoulli change-point error over three lengths.
    Table1,
    /// Bernoulli HMM error against true-parameter and fitted HMMs.
    Table2,
    /// Emission distance against Baum-Welch estimates.
    Fig2,
    /// Gaussian HMM error against a Gaussian HMM baseline.
    Table3,
    /// Gaussian mixture HMM error.
    Table4,
    /// Three-state emission recovery at fixed thresholds.
    AppendixB,
    /// Ladder-and-cluster recovery of the three-state layout.
    Clustering,
    /// Pattern-matching forecasts against the frozen last value.
    Forecast,
    /// Planted-group recovery in the flow network.
    Network,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub design: Design,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the design's default criterion.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Series length; each design has its own default.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Args)]
pub struct HmmArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Nonparametric,
    Hmm,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Training window length.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum, default_value_t = EngineArg::Nonparametric)]
    pub engine: EngineArg,
    #[command(flatten)]
    pub opts: DecodeOpts,
    /// Cluster count for the nonparametric engine.
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    /// Hidden states for the HMM engine.
    #[arg(long, default_value_t = 4)]
    pub states: usize,
    /// Index of the first forecast target; defaults to twice the window.
    #[arg(long)]
    pub first: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write RMSE, MAE and MAPE as JSON here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    LagLead,
    Classic,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// One CSV per instrument; the file stem names the node.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::LagLead)]
    pub estimator: EstimatorArg,
    /// Clock resolution in timestamp units.
    #[arg(long, default_value_t = 1.0)]
    pub unit: f64,
    /// Block width for lag-and-lead summarization (odd).
    #[arg(long, default_value_t = 5)]
    pub block: usize,
    /// History length for the classic estimator.
    #[arg(long, default_value_t = 5)]
    pub lag: usize,
    /// Quantile bins for the classic estimator.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    #[arg(long, default_value_t = 1 << 16)]
    pub pattern_cap: usize,
    #[arg(long, conflicts_with = "min_weight")]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub min_weight: Option<f64>,
    #[command(flatten)]
    pub opts: DecodeOpts,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub emit_plot_data: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Matrix CSV with a `node` header.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// The input already holds dissimilarities.
    #[arg(long)]
    pub precomputed: bool,
    /// Cut the tree into this many groups.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use regime_core::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::InvalidParams(_) | E::InvalidThresholdPair { .. } | E::AmbiguousTail) => 2,
        Some(E::MalformedCsv(_) | E::Csv(_)) => 3,
        Some(E::InsufficientData(_)) => 4,
        _ => 1,
    }
}

fn report(message: String, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": message, "code": code }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(e.to_string().trim_end().to_string(), 2),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            report(format!("{e:#}"), code)
        }
    }
}

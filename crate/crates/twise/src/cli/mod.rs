//! Experiment runner behind the `twise` binary.
//!
//! Subcommands: `loss-eval`, `analyze`, `synth`, `sparsify`, `semidense`,
//! `fit`, `metrics`, `compare`. Every command is deterministic given its
//! configuration and seed, and every data artifact gets a `<file>.json`
//! sidecar recording the tool version, seed and a configuration hash.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime/data error,
//! 3 non-convergence.

mod ops;
pub mod util;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::fitter::Baseline;

/// CLI failure, ordered by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Runtime or data error (exit 2).
    Runtime(String),
    /// A fit failed to converge (exit 3).
    NonConvergence(String),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "twise",
    version,
    about = "Twin-surface depth estimation toolkit: losses, ambiguity analysis, fitters, metrics, synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate loss kernels on a residual grid, or the combined loss of a
    /// field/target PGM set
    LossEval(LossEvalArgs),
    /// Sweep binary ambiguities: thresholds, predicted minimizers and
    /// (optionally) empirical single-pixel fits
    Analyze(AnalyzeArgs),
    /// Generate a scene: dense ground truth, labels and default sparse depth
    Synth(SynthArgs),
    /// Sample a scene with a subsampled LiDAR ring pattern
    Sparsify(SparsifyArgs),
    /// Accumulate multi-frame LiDAR into semi-dense ground truth with pose noise
    Semidense(SemidenseArgs),
    /// Fit a depth completion field to a scene's sparse samples
    Fit(FitArgs),
    /// Evaluate a prediction against ground truth (whole/edge/inside regions)
    Metrics(MetricsArgs),
    /// Compare two predictions: metrics, error-difference maps, win/loss histograms
    Compare(CompareArgs),
}

/// Scene selection shared by the generation and fitting commands.
#[derive(Debug, Args)]
struct SceneArgs {
    /// Scene spec JSON file (see the scene presets for the schema)
    #[arg(long, conflicts_with = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene with default parameters
    #[arg(long, value_enum)]
    preset: Option<ScenePreset>,
    /// Seed for scene jitter and any stochastic processing
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ScenePreset {
    Step1d,
    Flat1d,
    Slope1d,
    Slab2d,
    Pole,
    Composite,
}

#[derive(Debug, Args)]
struct LossEvalArgs {
    /// Asymmetry slope γ (≥ 1)
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Residual grid as start:step:end or a comma list
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    /// Which kernel the grid evaluates
    #[arg(long, value_enum, default_value_t = GridLoss::Ale)]
    loss: GridLoss,
    /// Foreground-channel PGM (file mode)
    #[arg(long, requires_all = ["c2", "sigma", "target"])]
    c1: Option<PathBuf>,
    /// Background-channel PGM (file mode)
    #[arg(long)]
    c2: Option<PathBuf>,
    /// Fusion-weight PGM, σ scaled by 65535 (file mode)
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Target depth PGM (file mode)
    #[arg(long)]
    target: Option<PathBuf>,
    /// Fusion term weight in the combined loss
    #[arg(long, default_value_t = 1.0)]
    fusion_weight: f64,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GridLoss {
    Ale,
    Rale,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Foreground probabilities, start:step:end or comma list
    #[arg(long, default_value = "0.1:0.1:0.9")]
    p1: String,
    /// Gamma values, start:step:end or comma list
    #[arg(long, default_value = "1.25,1.5,2,3,5")]
    gamma: String,
    /// Foreground depth of the binary mixture
    #[arg(long, default_value_t = 10.0)]
    d1: f64,
    /// Background depth of the binary mixture
    #[arg(long, default_value_t = 20.0)]
    d2: f64,
    /// Also run the stochastic single-pixel fit per cell
    #[arg(long)]
    empirical: bool,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 20_000)]
    iterations: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SparsifyArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Elevation rings kept: 0, 8, 16, 32 or 64
    #[arg(long, default_value_t = 32)]
    rows: u32,
    /// Ring selection offset
    #[arg(long, default_value_t = 0)]
    offset: u32,
    /// Azimuth step in degrees
    #[arg(long, default_value_t = 0.2)]
    azimuth_step: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SemidenseArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Accumulate ±K frames around the reference
    #[arg(long, default_value_t = 5)]
    frames: u32,
    /// Per-axis translation noise σ in meters
    #[arg(long, default_value_t = 0.0)]
    sigma_t: f64,
    /// Per-axis rotation noise σ in radians
    #[arg(long, default_value_t = 0.0)]
    sigma_r: f64,
    /// Per-frame motion: translation (m)
    #[arg(long, default_value_t = 0.25, allow_hyphen_values = true)]
    motion_tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    motion_ty: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    motion_tz: f64,
    /// Elevation rings per frame
    #[arg(long, default_value_t = 64)]
    rows: u32,
    #[arg(long, default_value_t = 0.2)]
    azimuth_step: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Fit configuration JSON (keys: learning_rate, iterations, seed,
    /// bandwidth, schedule, baseline, huber_delta, gamma, omega,
    /// fusion_weight); flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    huber_delta: Option<f64>,
    #[arg(long)]
    fusion_weight: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum UnitArg {
    Mm,
    M,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Prediction depth PGM
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth PGM
    #[arg(long)]
    gt: PathBuf,
    /// Label PGM enabling the edge/inside breakdown
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Trim threshold t for tMAE/tRMSE (meters)
    #[arg(long, default_value_t = crate::metrics::DEFAULT_TRIM_THRESHOLD)]
    trim_threshold: f64,
    /// Edge radius in pixels for the region masks
    #[arg(long, default_value_t = 3)]
    edge_radius: usize,
    /// Report unit
    #[arg(long, value_enum, default_value_t = UnitArg::Mm)]
    unit: UnitArg,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the reports as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Prediction A (the reference-method role: positive differences mean B wins)
    #[arg(long)]
    pred_a: PathBuf,
    /// Prediction B
    #[arg(long)]
    pred_b: PathBuf,
    /// Ground-truth depth PGM
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_TRIM_THRESHOLD)]
    trim_threshold: f64,
    #[arg(long, default_value_t = 3)]
    edge_radius: usize,
    /// |A| histogram bins as lo:hi:count
    #[arg(long, default_value = "0:5:50")]
    bins_a: String,
    /// |S| histogram bins as lo:hi:count
    #[arg(long, default_value = "0:25:50")]
    bins_s: String,
    /// Scale for the signed error-difference PGM encoding
    #[arg(long, default_value_t = 256.0)]
    scale: f64,
    #[arg(long, value_enum, default_value_t = UnitArg::Mm)]
    unit: UnitArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::LossEval(args) => ops::loss_eval(args),
        Command::Analyze(args) => ops::analyze(args),
        Command::Synth(args) => ops::synth(args),
        Command::Sparsify(args) => ops::sparsify(args),
        Command::Semidense(args) => ops::semidense(args),
        Command::Fit(args) => ops::fit(args),
        Command::Metrics(args) => ops::metrics(args),
        Command::Compare(args) => ops::compare(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::NonConvergence(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

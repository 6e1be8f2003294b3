use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hsad_core::RegularizerKind;

#[derive(Parser, Debug)]
#[command(name = "hsad", version, about = "Hyperspectral anomaly detection with mixed-noise removal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene and contaminate it with one noise case.
    Simulate(SimulateArgs),
    /// Split a cube into background, anomaly, sparse and stripe parts.
    Decompose(DecomposeArgs),
    /// Score a detection map against ground truth.
    Evaluate(EvaluateArgs),
    /// Run a decomposition per grid point and score each.
    Sweep(SweepArgs),
}

fn parse_reg(s: &str) -> Result<RegularizerKind, String> {
    s.parse().map_err(|_| format!("unknown regularizer {s:?}; expected htv, sstv, hsstv or nuclear"))
}

fn parse_case(s: &str) -> Result<u8, String> {
    match s.parse::<u8>() {
        Ok(c @ 1..=5) => Ok(c),
        _ => Err(format!("noise case must be 1..5, got {s:?}")),
    }
}

/// Noise parameters used to calibrate ε and α when they are not given.
#[derive(Args, Debug, Clone)]
pub struct NoiseArgs {
    /// Noise metadata file written by `simulate`.
    #[arg(long, value_name = "FILE")]
    pub meta: Option<PathBuf>,
    /// Gaussian standard deviation; overrides the metadata file.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Salt-and-pepper rate; overrides the metadata file.
    #[arg(long)]
    pub sp: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    pub height: usize,
    #[arg(long, default_value_t = 50)]
    pub width: usize,
    #[arg(long, default_value_t = 30)]
    pub bands: usize,
    /// Number of background endmembers.
    #[arg(long, default_value_t = 4)]
    pub endmembers: usize,
    /// Target as ROW,COL,HEIGHT,WIDTH,STRENGTH; repeatable. Without any,
    /// targets are placed from the seed.
    #[arg(long = "target", value_name = "SPEC")]
    pub targets: Vec<String>,
    /// Noise case 1..5.
    #[arg(long, value_parser = parse_case, default_value = "1")]
    pub case: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Calibration factor for the printed ε and α.
    #[arg(long, default_value_t = hsad_core::sweep::DEFAULT_ETA)]
    pub eta: f64,
    /// Output prefix; files are `<out>_clean.raw`, `<out>_observed.raw`,
    /// `<out>_gt.pgm` and `<out>_meta.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver and model settings shared by `decompose` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long = "reg", value_parser = parse_reg, default_value = "htv")]
    pub reg: RegularizerKind,
    /// Spectral weight for hsstv.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Stopping tolerance on the relative change of B + A + S + L.
    #[arg(long, default_value_t = hsad_core::SolverConfig::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Iteration cap; defaults to 10000 (5000 for nuclear).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Min-max scale the input cube to [0, 1] after loading.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Input cube (raw payload with a `.hdr` sidecar).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda1: f64,
    #[arg(long)]
    pub lambda2: f64,
    #[arg(long, default_value_t = hsad_core::sweep::DEFAULT_ETA)]
    pub eta: f64,
    /// Data-fidelity radius; overrides calibration.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sparse-noise radius; overrides calibration.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Diagnostics stride in iterations.
    #[arg(long, default_value_t = 100)]
    pub stride: usize,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Detection map as `.csv` (row,col,score) or `.pgm`.
    #[arg(long, conflicts_with = "anomaly", required_unless_present = "anomaly")]
    pub map: Option<PathBuf>,
    /// Anomaly cube; its tube norms form the map.
    #[arg(long)]
    pub anomaly: Option<PathBuf>,
    /// Ground-truth mask (binary PGM).
    #[arg(long)]
    pub gt: PathBuf,
    /// Where to write the ROC curve as CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Where to write the metrics text.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated λ₁ values; defaults to the regularizer's standard grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda1: Vec<f64>,
    /// Comma-separated λ₂ values; defaults to the regularizer's standard grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda2: Vec<f64>,
    /// Comma-separated η values.
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    pub eta: Vec<f64>,
    /// Fixed data-fidelity radius; must be given together with --alpha.
    #[arg(long, requires = "alpha")]
    pub epsilon: Option<f64>,
    /// Fixed sparse-noise radius; must be given together with --epsilon.
    #[arg(long, requires = "epsilon")]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

use std::path::PathBuf;

use awp_core::analysis::suite::ActivationModel;
use awp_core::engine::{GridPolicy, InitStrategy, Mode, StepRule};
use awp_core::projections::{ProjectionOrder, SparsityTarget};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "awp", version, about = "Activation-aware pruning and quantization of linear layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress one layer with projected gradient descent.
    Compress(CompressArgs),
    /// Run a one-shot baseline (magnitude, Wanda, RTN, AWQ-style, or a sequential pipeline).
    Baseline(BaselineArgs),
    /// Run benchmark suites from a JSON file and write a report.
    Bench(BenchArgs),
    /// Compare AWP, Wanda and magnitude pruning against the exhaustive oracle.
    OracleCompare(OracleArgs),
    /// Write a seeded synthetic layer (weights.awpt, acts.awpt).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Weight matrix (AWPT, d_out × d_in).
    #[arg(long)]
    pub weights: PathBuf,
    /// Calibration activations (AWPT, d_in × n).
    #[arg(long, conflicts_with = "cov", required_unless_present = "cov")]
    pub acts: Option<PathBuf>,
    /// Precomputed covariance XXᵀ/n (AWPT, d_in × d_in).
    #[arg(long)]
    pub cov: Option<PathBuf>,
    /// Sample count behind --cov; enables the output residual.
    #[arg(long, requires = "cov")]
    pub samples: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Clone, Args)]
pub struct SparsityArgs {
    /// Fraction of each row to prune.
    #[arg(long, conflicts_with = "keep")]
    pub ratio: Option<f64>,
    /// Entries kept per row.
    #[arg(long)]
    pub keep: Option<usize>,
}

impl SparsityArgs {
    pub fn target(&self) -> Option<SparsityTarget> {
        match (self.ratio, self.keep) {
            (Some(p), _) => Some(SparsityTarget::Ratio(p)),
            (None, Some(k)) => Some(SparsityTarget::Keep(k)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct QuantArgs {
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// Quantization group size along a row.
    #[arg(long, default_value_t = 128)]
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Prune,
    Quantize,
    Joint,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Prune => Mode::Prune,
            ModeArg::Quantize => Mode::Quantize,
            ModeArg::Joint => Mode::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Wanda,
    Rtn,
    Magnitude,
    OriginalWeight,
    Provided,
}

impl From<InitArg> for InitStrategy {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Wanda => InitStrategy::Wanda,
            InitArg::Rtn => InitStrategy::Rtn,
            InitArg::Magnitude => InitStrategy::Magnitude,
            InitArg::OriginalWeight => InitStrategy::OriginalWeight,
            InitArg::Provided => InitStrategy::Provided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    PruneThenQuant,
    QuantThenPrune,
}

impl From<OrderArg> for ProjectionOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::PruneThenQuant => ProjectionOrder::PruneThenQuant,
            OrderArg::QuantThenPrune => ProjectionOrder::QuantThenPrune,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Refit,
    Freeze,
}

impl From<GridArg> for GridPolicy {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Refit => GridPolicy::Refit,
            GridArg::Freeze => GridPolicy::Freeze,
        }
    }
}

/// Parses `frob:c`, `explicit:v` or `safe`.
pub fn parse_eta_rule(s: &str) -> Result<StepRule, String> {
    let num = |v: &str| -> Result<f64, String> {
        let x: f64 = v.parse().map_err(|_| format!("not a number: {v:?}"))?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(format!("step constant must be positive, got {v}"))
        }
    };
    match s.split_once(':') {
        Some(("frob", c)) => Ok(StepRule::FrobScaled(num(c)?)),
        Some(("explicit", v)) => Ok(StepRule::Explicit(num(v)?)),
        None if s == "safe" => Ok(StepRule::LipschitzSafe),
        _ => Err(format!("expected frob:c, explicit:v or safe, got {s:?}")),
    }
}

/// Parses `iid` or `factor:RANK[:NOISE]` (noise defaults to 0.5).
pub fn parse_activation_model(s: &str) -> Result<ActivationModel, String> {
    if s == "iid" {
        return Ok(ActivationModel::Iid);
    }
    let rest = s
        .strip_prefix("factor:")
        .ok_or_else(|| format!("expected iid or factor:RANK[:NOISE], got {s:?}"))?;
    let (rank, noise) = match rest.split_once(':') {
        Some((r, n)) => (r, n.parse::<f64>().map_err(|_| format!("bad noise level {n:?}"))?),
        None => (rest, 0.5),
    };
    let rank: usize = rank.parse().map_err(|_| format!("bad rank {rank:?}"))?;
    if rank == 0 || !(noise >= 0.0 && noise.is_finite()) {
        return Err("factor model needs rank >= 1 and a finite noise level >= 0".into());
    }
    Ok(ActivationModel::Factor { rank, noise })
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sparsity: SparsityArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
    /// Step size: frob:c (c/‖C‖_F), explicit:v, or safe (1/λmax). Mode default when omitted.
    #[arg(long, value_parser = parse_eta_rule)]
    pub eta_rule: Option<StepRule>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Normalized-gradient stopping tolerance (prune mode).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Starting matrix for --init provided (AWPT).
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OrderArg::PruneThenQuant)]
    pub joint_order: OrderArg,
    #[arg(long, value_enum, default_value_t = GridArg::Refit)]
    pub grid_policy: GridArg,
    /// Joint mode: prune-only iterations before joint projection starts.
    #[arg(long)]
    pub prune_iters: Option<usize>,
    /// Joint mode: iterations over which the pruning ratio ramps up.
    #[arg(long)]
    pub ramp_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Magnitude,
    Wanda,
    Rtn,
    AwqLite,
    /// Wanda, then AWQ-style quantization with the mask re-applied.
    WandaAwq,
    /// AWQ-style quantization, then Wanda on the quantized matrix.
    AwqWanda,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sparsity: SparsityArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
    /// Exponent of the activation scales for AWQ-style quantization.
    #[arg(long, default_value_t = 0.5)]
    pub exponent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Suite file: one suite object or an array of them.
    #[arg(long)]
    pub suite: PathBuf,
    /// Overrides seed0 of every suite.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sparsity: SparsityArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comparison path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub d_out: usize,
    #[arg(long)]
    pub d_in: usize,
    /// Calibration samples.
    #[arg(long)]
    pub n: usize,
    /// iid or factor:RANK[:NOISE].
    #[arg(long, value_parser = parse_activation_model, default_value = "iid")]
    pub activations: ActivationModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

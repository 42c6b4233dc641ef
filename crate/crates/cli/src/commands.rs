use std::fs;
use std::path::Path;

use awp_core::analysis::suite::{compare_with_oracle, gaussian_layer, SuiteSpec};
use awp_core::analysis::{parse_suites, run_suites};
use awp_core::awpt::{read_matrix, write_matrix};
use awp_core::baselines::{
    awq_lite_quantize, magnitude_prune, one_shot_result, rtn_quantize, sequential_pipeline, wanda_prune,
};
use awp_core::engine::{
    CompressionConfig, CompressionResult, Compressor, GridPolicy, InitStrategy, Mode, RampSchedule,
    StopReason,
};
use awp_core::projections::{ProjectionOrder, QuantSpec, RowSparsitySpec, SparsityTarget};
use awp_core::tensor::DenseMatrix;
use awp_core::{AwpError, Scalar};
use serde::Serialize;

use crate::args::{
    BaselineArgs, BenchArgs, CompressArgs, InputArgs, Method, OracleArgs, Precision, SparsityArgs,
    SynthArgs,
};
use crate::io::{load_layer, write_artifacts, write_json, Artifacts};
use crate::Failure;

#[derive(Serialize)]
struct Inputs {
    weights: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    acts: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<String>,
}

impl Inputs {
    fn of(a: &InputArgs) -> Self {
        let s = |p: &Path| p.display().to_string();
        Self {
            weights: s(&a.weights),
            acts: a.acts.as_deref().map(s),
            cov: a.cov.as_deref().map(s),
        }
    }
}

/// Configuration echo in `result.json`.
#[derive(Serialize, Default)]
struct ConfigEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<InitStrategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sparsity: Option<SparsityTarget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    keep: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quant: Option<QuantSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joint_order: Option<ProjectionOrder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_policy: Option<GridPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<RampSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exponent: Option<f64>,
    precision: &'static str,
    seed: u64,
}

#[derive(Serialize)]
struct ResultManifest {
    command: &'static str,
    mode: Mode,
    shape: [usize; 2],
    inputs: Inputs,
    config: ConfigEcho,
    eta: Option<f64>,
    initial_normalized_loss: f64,
    final_normalized_loss: f64,
    final_output_residual: Option<f64>,
    iterations: usize,
    stop_reason: StopReason,
    feasible: bool,
    wall_time_ms: f64,
    artifacts: Artifacts,
}

fn finish<T: Scalar>(
    command: &'static str,
    out: &Path,
    input: &InputArgs,
    config: ConfigEcho,
    r: &CompressionResult<T>,
) -> Result<(), Failure> {
    let feasible = r.check_feasibility();
    let artifacts = write_artifacts(out, r)?;
    let manifest = ResultManifest {
        command,
        mode: r.mode,
        shape: [r.theta.rows(), r.theta.cols()],
        inputs: Inputs::of(input),
        config,
        eta: r.eta,
        initial_normalized_loss: r.initial_normalized_loss,
        final_normalized_loss: r.final_normalized_loss,
        final_output_residual: r.final_output_residual,
        iterations: r.iterations_run,
        stop_reason: r.stop_reason,
        feasible: feasible.is_ok(),
        wall_time_ms: r.wall_time_ms,
        artifacts,
    };
    write_json(&out.join("result.json"), &manifest)?;
    feasible.map_err(|e| Failure::numerical(format!("output violates its constraints: {e}")))
}

fn required_target(s: &SparsityArgs) -> Result<SparsityTarget, Failure> {
    s.target()
        .ok_or_else(|| Failure::input("this mode needs --ratio or --keep"))
}

fn build_config(a: &CompressArgs) -> Result<CompressionConfig, Failure> {
    let mode: Mode = a.mode.into();
    let qspec = || QuantSpec::new(a.quant.bits, a.quant.group);
    let mut cfg = match mode {
        Mode::Prune => CompressionConfig::pruning(required_target(&a.sparsity)?),
        Mode::Quantize => CompressionConfig::quantization(qspec()?),
        Mode::Joint => CompressionConfig::joint(required_target(&a.sparsity)?, qspec()?),
    };
    if let Some(t) = a.sparsity.target() {
        cfg.sparsity = Some(t);
    }
    if let Some(init) = a.init {
        cfg.init = init.into();
    }
    if cfg.init == InitStrategy::Rtn && cfg.quant.is_none() {
        cfg.quant = Some(qspec()?);
    }
    if let Some(rule) = a.eta_rule {
        cfg.step_rule = rule;
    }
    if let Some(tol) = a.tol {
        cfg.grad_tol = tol;
    }
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    if mode == Mode::Joint {
        let total = a.max_iters.unwrap_or(cfg.schedule.total_iters);
        let prune = a.prune_iters.unwrap_or(if a.max_iters.is_some() { total / 2 } else { cfg.schedule.prune_only_iters });
        let ramp = a.ramp_iters.unwrap_or(if a.max_iters.is_some() || a.prune_iters.is_some() {
            prune / 2
        } else {
            cfg.schedule.ramp_iters
        });
        cfg.schedule = RampSchedule {
            total_iters: total,
            prune_only_iters: prune,
            ramp_iters: ramp,
        };
        cfg.max_iters = total;
    }
    cfg.joint_order = a.joint_order.into();
    cfg.grid_policy = a.grid_policy.into();
    cfg.validate()?;
    Ok(cfg)
}

pub fn compress(a: &CompressArgs) -> Result<(), Failure> {
    match a.input.precision {
        Precision::F32 => compress_as::<f32>(a),
        Precision::F64 => compress_as::<f64>(a),
    }
}

fn compress_as<T: Scalar>(a: &CompressArgs) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    let layer = load_layer::<T>(&a.input)?;
    let provided: Option<DenseMatrix<T>> = match (&a.init_weights, cfg.init) {
        (Some(p), InitStrategy::Provided) => Some(read_matrix(p)?),
        (None, InitStrategy::Provided) => {
            return Err(Failure::input("--init provided needs --init-weights"));
        }
        (Some(_), _) => return Err(Failure::input("--init-weights is only used with --init provided")),
        (None, _) => None,
    };
    let mut run = Compressor::new(&layer.w, &layer.cov, &cfg);
    if let Some(n) = &layer.norms {
        run = run.with_norms(n);
    }
    if let Some(p) = &provided {
        run = run.with_initial(p);
    }
    let r = run.run()?;
    let mode = cfg.mode;
    let echo = ConfigEcho {
        eta_rule: Some(cfg.step_rule.to_string()),
        tol: Some(cfg.grad_tol),
        max_iters: Some(cfg.iteration_budget()),
        init: Some(cfg.init),
        sparsity: cfg.sparsity,
        keep: r.keep,
        quant: cfg.quant.filter(|_| mode != Mode::Prune),
        joint_order: (mode == Mode::Joint).then_some(cfg.joint_order),
        grid_policy: (mode != Mode::Prune).then_some(cfg.grid_policy),
        schedule: (mode == Mode::Joint).then_some(cfg.schedule),
        precision: a.input.precision.name(),
        seed: a.seed,
        ..ConfigEcho::default()
    };
    finish("compress", &a.out, &a.input, echo, &r)
}

pub fn baseline(a: &BaselineArgs) -> Result<(), Failure> {
    match a.input.precision {
        Precision::F32 => baseline_as::<f32>(a),
        Precision::F64 => baseline_as::<f64>(a),
    }
}

fn baseline_as<T: Scalar>(a: &BaselineArgs) -> Result<(), Failure> {
    let layer = load_layer::<T>(&a.input)?;
    let (w, cov) = (&layer.w, &layer.cov);
    let d_in = w.cols();
    let spec = || -> Result<RowSparsitySpec, Failure> {
        Ok(RowSparsitySpec::from_target(required_target(&a.sparsity)?, d_in)?)
    };
    let qspec = || QuantSpec::new(a.quant.bits, a.quant.group);
    let awq_norms = || {
        layer
            .norms
            .clone()
            .ok_or_else(|| Failure::input("AWQ-style scaling needs raw activations (--acts)"))
    };
    let uses_sparsity = !matches!(a.method, Method::Rtn | Method::AwqLite);
    let uses_quant = !matches!(a.method, Method::Magnitude | Method::Wanda);
    let r = match a.method {
        Method::Magnitude | Method::Wanda => {
            let spec = spec()?;
            let (theta, mask) = if a.method == Method::Magnitude {
                magnitude_prune(w, &spec)?
            } else {
                wanda_prune(w, &layer.norms_or_derived(), &spec)?
            };
            let mut r = one_shot_result(w, cov, theta, Mode::Prune)?;
            r.mask = Some(mask);
            r.keep = Some(spec.keep_count());
            r
        }
        Method::Rtn => {
            let (theta, grid) = rtn_quantize(w, &qspec()?)?;
            let mut r = one_shot_result(w, cov, theta, Mode::Quantize)?;
            r.grid = Some(grid);
            r
        }
        Method::AwqLite => {
            let out = awq_lite_quantize(w, &awq_norms()?, &qspec()?, a.exponent)?;
            let mut r = one_shot_result(w, cov, out.theta, Mode::Quantize)?;
            r.grid = Some(out.grid);
            r.column_scales = Some(out.column_scales);
            r
        }
        Method::WandaAwq | Method::AwqWanda => {
            let order = if a.method == Method::WandaAwq {
                ProjectionOrder::PruneThenQuant
            } else {
                ProjectionOrder::QuantThenPrune
            };
            sequential_pipeline(w, &awq_norms()?, cov, &spec()?, &qspec()?, order, a.exponent)?
        }
    };
    let echo = ConfigEcho {
        method: Some(format!("{:?}", a.method).to_lowercase()),
        sparsity: a.sparsity.target().filter(|_| uses_sparsity),
        keep: r.keep,
        quant: if uses_quant { Some(qspec()?) } else { None },
        exponent: matches!(a.method, Method::AwqLite | Method::WandaAwq | Method::AwqWanda).then_some(a.exponent),
        precision: a.input.precision.name(),
        seed: a.seed,
        ..ConfigEcho::default()
    };
    finish("baseline", &a.out, &a.input, echo, &r)
}

fn with_seed0(s: SuiteSpec, seed: u64) -> SuiteSpec {
    match s {
        SuiteSpec::Recovery(mut x) => {
            x.seed0 = seed;
            SuiteSpec::Recovery(x)
        }
        SuiteSpec::Oracle(mut x) => {
            x.seed0 = seed;
            SuiteSpec::Oracle(x)
        }
        SuiteSpec::Quant(mut x) => {
            x.seed0 = seed;
            SuiteSpec::Quant(x)
        }
        SuiteSpec::Joint(mut x) => {
            x.seed0 = seed;
            SuiteSpec::Joint(x)
        }
    }
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.suite)?;
    let mut suites = parse_suites(&text)?;
    if let Some(seed) = a.seed {
        suites = suites.into_iter().map(|s| with_seed0(s, seed)).collect();
    }
    let reports = run_suites(&suites).map_err(|e| match e {
        AwpError::InvalidConfig(_) | AwpError::Shape(_) | AwpError::Guard(_) => Failure::from(e),
        other => Failure::numerical(format!("benchmark harness failed: {other}")),
    })?;
    write_json(&a.out, &reports)?;
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    row: usize,
    oracle: f64,
    awp: f64,
    wanda: f64,
    magnitude: f64,
    awp_ratio: f64,
    wanda_ratio: f64,
    magnitude_ratio: f64,
}

#[derive(Serialize)]
struct Comparison {
    inputs: Inputs,
    shape: [usize; 2],
    keep: usize,
    kappa: f64,
    rows: Vec<OracleRow>,
    awp_total: f64,
    wanda_total: f64,
    magnitude_total: f64,
    awp_iterations: usize,
    feasible: bool,
}

/// `loss / oracle` with `0/0 = 1`.
fn ratio(loss: f64, oracle: f64) -> f64 {
    if oracle > 0.0 {
        loss / oracle
    } else if loss <= 1e-12 {
        1.0
    } else {
        f64::INFINITY
    }
}

pub fn oracle_compare(a: &OracleArgs) -> Result<(), Failure> {
    let layer = load_layer::<f64>(&a.input)?;
    let spec = RowSparsitySpec::from_target(required_target(&a.sparsity)?, layer.w.cols())?;
    let kappa = layer.cov.spectral()?.kappa;
    let inst = compare_with_oracle(&layer.w, &layer.cov, spec.keep_count(), a.seed, kappa)?;
    let rows = inst
        .rows
        .iter()
        .enumerate()
        .map(|(row, r)| OracleRow {
            row,
            oracle: r.oracle,
            awp: r.awp,
            wanda: r.wanda,
            magnitude: r.magnitude,
            awp_ratio: ratio(r.awp, r.oracle),
            wanda_ratio: ratio(r.wanda, r.oracle),
            magnitude_ratio: ratio(r.magnitude, r.oracle),
        })
        .collect();
    let report = Comparison {
        inputs: Inputs::of(&a.input),
        shape: [layer.w.rows(), layer.w.cols()],
        keep: spec.keep_count(),
        kappa,
        rows,
        awp_total: inst.awp_total,
        wanda_total: inst.wanda_total,
        magnitude_total: inst.magnitude_total,
        awp_iterations: inst.awp_iterations,
        feasible: inst.feasible,
    };
    write_json(&a.out, &report)?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    if a.d_out == 0 || a.d_in == 0 || a.n == 0 {
        return Err(Failure::input("--d-out, --d-in and --n must be positive"));
    }
    let (w, x) = gaussian_layer(a.d_out, a.d_in, a.n, a.activations, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_matrix(a.out.join("weights.awpt"), &w)?;
    write_matrix(a.out.join("acts.awpt"), &x)?;
    Ok(())
}

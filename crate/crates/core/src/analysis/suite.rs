//! Seeded benchmark suites and their JSON reports.
//!
//! A suite file is a JSON array (or a single object) of suite specs. Each
//! spec carries a `kind` of `recovery`, `oracle`, `quant` or `joint`; a spec
//! without one is a recovery suite. Trial `t` of a suite uses seed
//! `seed0 + t`, so reports do not depend on how trials are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::oracle::{oracle_row_sparse, row_loss};
use super::recovery::{check_recovery_bound, gen_recovery_trial, run_iht, standard_normal_matrix, TrialSpec};
use crate::baselines::{
    magnitude_prune, rtn_quantize, sequential_pipeline, wanda_prune, ActivationNorms,
    AWQ_LITE_EXPONENT,
};
use crate::engine::{CompressionConfig, CompressionResult, Compressor, StepRule};
use crate::error::{AwpError, Result};
use crate::projections::{ProjectionOrder, QuantSpec, RowSparsitySpec, SparsityTarget};
use crate::tensor::{activation_loss, Covariance, DenseMatrix};

/// Default condition-number gate for recovery trials, pinned from the
/// measured spread at `d = 32, n = 2048` (see the crate README).
pub const KAPPA_GATE: f64 = 1.75;

/// Slack for comparisons between losses that should be ordered exactly.
const ORDER_SLACK: f64 = 1e-12;

fn trial_seed(seed0: u64, t: usize) -> u64 {
    seed0.wrapping_add(t as u64)
}

/// Nearest-rank summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distribution {
    pub count: usize,
    pub min: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Self {
            count: v.len(),
            min: v[0],
            p10: q(0.10),
            p50: q(0.50),
            p90: q(0.90),
            p99: q(0.99),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn feasibility_failures<T: crate::Scalar>(results: &[&CompressionResult<T>]) -> usize {
    results.iter().filter(|r| r.check_feasibility().is_err()).count()
}

/* ---------- recovery ---------- */

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverySuite {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub noise_level: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed0: u64,
    #[serde(default = "default_trial_rows")]
    pub rows: usize,
    #[serde(default = "default_recovery_iters")]
    pub max_iters: usize,
    #[serde(default = "default_kappa_gate")]
    pub kappa_gate: f64,
}

fn default_trial_rows() -> usize {
    8
}
fn default_recovery_iters() -> usize {
    64
}
fn default_kappa_gate() -> f64 {
    KAPPA_GATE
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryTrialSummary {
    pub seed: u64,
    pub kappa: f64,
    pub passes_gate: bool,
    pub bound_pairs: usize,
    pub bound_satisfied: usize,
    pub t_prime: Option<usize>,
    pub aggregate_error: f64,
    pub aggregate_bound: f64,
    pub aggregate_satisfied: bool,
    pub rows_support_recovered: usize,
    pub iterations: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub suite: RecoverySuite,
    pub kappa: Option<Distribution>,
    pub trials_passing_gate: usize,
    /// Bound satisfaction over (row, iteration) pairs of gated trials.
    pub bound_rate: f64,
    /// Same over every trial.
    pub bound_rate_all: f64,
    /// Trials outside the gate with at least one bound violation.
    pub violations_outside_gate: usize,
    /// Trials inside the gate with at least one bound violation.
    pub violations_inside_gate: usize,
    pub corollary_holds: usize,
    pub corollary_rate: f64,
    /// Fraction of rows (over all trials) whose final support is the planted one.
    pub support_recovery_rate: f64,
    pub feasibility_failures: usize,
    pub per_trial: Vec<RecoveryTrialSummary>,
}

fn run_recovery_trial(s: &RecoverySuite, t: usize) -> Result<RecoveryTrialSummary> {
    let seed = trial_seed(s.seed0, t);
    let spec = TrialSpec {
        d: s.d,
        k: s.k,
        n: s.n,
        noise_level: s.noise_level,
        rows: s.rows,
    };
    let trial = gen_recovery_trial(spec, seed)?;
    let kappa = trial.cov.spectral()?.kappa;
    let iterates = run_iht(&trial, s.max_iters)?;
    let last = iterates.last().expect("initial iterate is always recorded");
    let feasible = (0..last.rows()).all(|i| last.row_nnz(i) <= s.k);
    let b = check_recovery_bound(&trial, &iterates)?;
    Ok(RecoveryTrialSummary {
        seed,
        kappa,
        passes_gate: kappa <= s.kappa_gate,
        bound_pairs: b.pairs_checked,
        bound_satisfied: b.pairs_satisfied,
        t_prime: b.t_prime,
        aggregate_error: b.aggregate_error,
        aggregate_bound: b.aggregate_bound,
        aggregate_satisfied: b.aggregate_satisfied,
        rows_support_recovered: b.rows_support_recovered,
        iterations: iterates.len() - 1,
        feasible,
    })
}

pub fn run_recovery_suite(s: &RecoverySuite) -> Result<RecoveryReport> {
    let per_trial = (0..s.trials)
        .into_par_iter()
        .map(|t| run_recovery_trial(s, t))
        .collect::<Result<Vec<_>>>()?;
    let gated: Vec<_> = per_trial.iter().filter(|t| t.passes_gate).collect();
    let pairs = |v: &[&RecoveryTrialSummary]| {
        v.iter().fold((0, 0), |(a, b), t| (a + t.bound_pairs, b + t.bound_satisfied))
    };
    let all: Vec<_> = per_trial.iter().collect();
    let (gp, gs) = pairs(&gated);
    let (ap, asat) = pairs(&all);
    let kappas: Vec<f64> = per_trial.iter().map(|t| t.kappa).collect();
    let corollary_holds = gated.iter().filter(|t| t.aggregate_satisfied).count();
    let recovered: usize = per_trial.iter().map(|t| t.rows_support_recovered).sum();
    Ok(RecoveryReport {
        suite: *s,
        kappa: Distribution::of(&kappas),
        trials_passing_gate: gated.len(),
        bound_rate: rate(gs, gp),
        bound_rate_all: rate(asat, ap),
        violations_outside_gate: per_trial
            .iter()
            .filter(|t| !t.passes_gate && t.bound_satisfied < t.bound_pairs)
            .count(),
        violations_inside_gate: gated.iter().filter(|t| t.bound_satisfied < t.bound_pairs).count(),
        corollary_holds,
        corollary_rate: rate(corollary_holds, gated.len()),
        support_recovery_rate: rate(recovered, s.trials * s.rows),
        feasibility_failures: per_trial.iter().filter(|t| !t.feasible).count(),
        per_trial,
    })
}

/* ---------- oracle comparison ---------- */

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSuite {
    #[serde(default = "default_oracle_d")]
    pub d_in: usize,
    #[serde(default = "default_oracle_k")]
    pub k: usize,
    #[serde(default = "default_trial_rows")]
    pub rows: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed0: u64,
    /// Eigenvalues of the generated covariances are uniform on `[1, kappa_max]`.
    #[serde(default = "default_kappa_max")]
    pub kappa_max: f64,
}

fn default_oracle_d() -> usize {
    10
}
fn default_oracle_k() -> usize {
    3
}
fn default_kappa_max() -> f64 {
    3.0
}

/// Per-row losses of each method on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowComparison {
    pub oracle: f64,
    pub awp: f64,
    pub wanda: f64,
    pub magnitude: f64,
}

impl RowComparison {
    /// `awp / oracle`, with `0/0 = 1`.
    pub fn awp_gap(&self) -> f64 {
        gap(self.awp, self.oracle)
    }
}

fn gap(loss: f64, oracle: f64) -> f64 {
    if oracle > 0.0 {
        loss / oracle
    } else if loss <= ORDER_SLACK {
        1.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleInstance {
    pub seed: u64,
    pub kappa: f64,
    pub rows: Vec<RowComparison>,
    pub awp_total: f64,
    pub wanda_total: f64,
    pub magnitude_total: f64,
    pub awp_iterations: usize,
    pub awp_trace_monotone: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub suite: OracleSuite,
    pub instances_used: usize,
    pub kappa: Option<Distribution>,
    /// Rows with AWP loss at most 1.05× the oracle.
    pub rows_within_5pct: f64,
    pub awp_gap: Option<Distribution>,
    pub wanda_gap: Option<Distribution>,
    pub magnitude_gap: Option<Distribution>,
    pub awp_le_wanda: f64,
    pub awp_le_magnitude: f64,
    pub wanda_le_magnitude: f64,
    /// Rows where some method beat the oracle beyond round-off.
    pub oracle_violations: usize,
    pub monotone_traces: f64,
    pub feasibility_failures: usize,
    pub per_instance: Vec<OracleInstance>,
}

/// `Q diag(λ) Qᵀ` with `λ` uniform on `[1, kappa_max]` and `Q` from
/// Gram-Schmidt on a Gaussian matrix.
pub fn random_spd(d: usize, kappa_max: f64, rng: &mut ChaCha8Rng) -> Result<DenseMatrix<f64>> {
    let g = standard_normal_matrix(d, d, rng);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = g.row(i).to_vec();
        for _ in 0..2 {
            for u in &q {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(AwpError::Singular("degenerate Gaussian draw".into()));
        }
        q.push(v.into_iter().map(|a| a / norm).collect());
    }
    let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..=kappa_max)).collect();
    let mut c = DenseMatrix::from_fn(d, d, |i, j| (0..d).map(|l| q[l][i] * lambda[l] * q[l][j]).sum());
    for i in 0..d {
        for j in 0..i {
            let v = c.get(j, i);
            c.set(i, j, v);
        }
    }
    Ok(c)
}

fn run_oracle_instance(s: &OracleSuite, t: usize) -> Result<Option<OracleInstance>> {
    let seed = trial_seed(s.seed0, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cov = Covariance::from_matrix(random_spd(s.d_in, s.kappa_max, &mut rng)?, true, None)?;
    let kappa = cov.spectral()?.kappa;
    if kappa > s.kappa_max * (1.0 + 1e-9) {
        return Ok(None);
    }
    let w = standard_normal_matrix(s.rows, s.d_in, &mut rng);
    Ok(Some(compare_with_oracle(&w, &cov, s.k, seed, kappa)?))
}

/// Runs AWP (Wanda start, `1/λmax` steps), Wanda and magnitude pruning on
/// `w` and compares every row with the exhaustive oracle.
pub fn compare_with_oracle(
    w: &DenseMatrix<f64>,
    cov: &Covariance<f64>,
    k: usize,
    seed: u64,
    kappa: f64,
) -> Result<OracleInstance> {
    let spec = RowSparsitySpec::keep(k, w.cols())?;
    let norms = ActivationNorms::from_covariance(cov);
    let mut cfg = CompressionConfig::pruning(SparsityTarget::Keep(k));
    cfg.step_rule = StepRule::LipschitzSafe;
    let awp = Compressor::new(w, cov, &cfg).with_norms(&norms).run()?;
    let (wanda, wanda_mask) = wanda_prune(w, &norms, &spec)?;
    let (mag, mag_mask) = magnitude_prune(w, &spec)?;
    let rows = (0..w.rows())
        .map(|i| {
            Ok(RowComparison {
                oracle: oracle_row_sparse(w.row(i), cov, k)?.loss,
                awp: row_loss(w.row(i), awp.theta.row(i), cov),
                wanda: row_loss(w.row(i), wanda.row(i), cov),
                magnitude: row_loss(w.row(i), mag.row(i), cov),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = |f: fn(&RowComparison) -> f64| rows.iter().map(|r| f(r).powi(2)).sum::<f64>().sqrt();
    let feasible = awp.check_feasibility().is_ok()
        && wanda_mask.has_row_count(k)
        && mag_mask.has_row_count(k)
        && wanda_mask.covers_support(&wanda)
        && mag_mask.covers_support(&mag);
    Ok(OracleInstance {
        seed,
        kappa,
        awp_total: total(|r| r.awp),
        wanda_total: total(|r| r.wanda),
        magnitude_total: total(|r| r.magnitude),
        awp_iterations: awp.iterations_run,
        awp_trace_monotone: awp.trace.is_non_increasing(1e-10),
        feasible,
        rows,
    })
}

pub fn run_oracle_suite(s: &OracleSuite) -> Result<OracleReport> {
    let per_instance: Vec<OracleInstance> = (0..s.trials)
        .into_par_iter()
        .map(|t| run_oracle_instance(s, t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let rows: Vec<&RowComparison> = per_instance.iter().flat_map(|i| &i.rows).collect();
    let within = rows.iter().filter(|r| r.awp <= 1.05 * r.oracle + ORDER_SLACK).count();
    let violations = rows
        .iter()
        .filter(|r| {
            let floor = r.oracle - 1e-9 * (1.0 + r.oracle);
            r.awp < floor || r.wanda < floor || r.magnitude < floor
        })
        .count();
    let n = per_instance.len();
    let count = |f: &dyn Fn(&OracleInstance) -> bool| per_instance.iter().filter(|i| f(i)).count();
    let le = |a: f64, b: f64| a <= b * (1.0 + ORDER_SLACK) + ORDER_SLACK;
    Ok(OracleReport {
        suite: *s,
        instances_used: n,
        kappa: Distribution::of(&per_instance.iter().map(|i| i.kappa).collect::<Vec<_>>()),
        rows_within_5pct: rate(within, rows.len()),
        awp_gap: Distribution::of(&rows.iter().map(|r| r.awp_gap()).collect::<Vec<_>>()),
        wanda_gap: Distribution::of(&rows.iter().map(|r| gap(r.wanda, r.oracle)).collect::<Vec<_>>()),
        magnitude_gap: Distribution::of(
            &rows.iter().map(|r| gap(r.magnitude, r.oracle)).collect::<Vec<_>>(),
        ),
        awp_le_wanda: rate(count(&|i| le(i.awp_total, i.wanda_total)), n),
        awp_le_magnitude: rate(count(&|i| le(i.awp_total, i.magnitude_total)), n),
        wanda_le_magnitude: rate(count(&|i| le(i.wanda_total, i.magnitude_total)), n),
        oracle_violations: violations,
        monotone_traces: rate(count(&|i| i.awp_trace_monotone), n),
        feasibility_failures: count(&|i| !i.feasible),
        per_instance,
    })
}

/* ---------- quantization ---------- */

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSuite {
    #[serde(default = "default_d_out")]
    pub d_out: usize,
    #[serde(default = "default_d_in")]
    pub d_in: usize,
    #[serde(default = "default_samples")]
    pub n: usize,
    #[serde(default = "default_bits")]
    pub bits: u32,
    #[serde(default = "default_group")]
    pub group: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed0: u64,
    #[serde(default)]
    pub activations: ActivationModel,
}

fn default_d_out() -> usize {
    64
}
fn default_d_in() -> usize {
    128
}
fn default_samples() -> usize {
    1024
}
fn default_bits() -> u32 {
    4
}
fn default_group() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantInstance {
    pub seed: u64,
    pub rtn_loss: f64,
    pub awp_loss: f64,
    pub trace_initial: f64,
    pub trace_final: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub suite: QuantSuite,
    pub awp_le_rtn: f64,
    pub awp_lt_rtn: f64,
    /// Instances whose final normalized loss is below the initial one.
    pub trace_decreasing: f64,
    /// `awp_loss / rtn_loss`.
    pub loss_ratio: Option<Distribution>,
    pub feasibility_failures: usize,
    pub per_instance: Vec<QuantInstance>,
}

/// Distribution of the synthetic calibration activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ActivationModel {
    /// Independent standard normal entries; `C ≈ I`.
    #[default]
    Iid,
    /// `X = B F + noise·G` with `B` (`d_in × rank`), `F` and `G` standard
    /// normal: channels share a few latent factors, as real activations do.
    Factor { rank: usize, noise: f64 },
}

/// Gaussian weight and activations for one instance: `(W, X)`.
pub fn gaussian_layer(
    d_out: usize,
    d_in: usize,
    n: usize,
    model: ActivationModel,
    seed: u64,
) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = standard_normal_matrix(d_out, d_in, &mut rng);
    let x = match model {
        ActivationModel::Iid => standard_normal_matrix(d_in, n, &mut rng),
        ActivationModel::Factor { rank, noise } => {
            let b = standard_normal_matrix(d_in, rank, &mut rng);
            let f = standard_normal_matrix(rank, n, &mut rng);
            let g = standard_normal_matrix(d_in, n, &mut rng);
            b.matmul(&f)?.add_scaled(noise, &g)?
        }
    };
    Ok((w, x))
}

fn run_quant_instance(s: &QuantSuite, t: usize) -> Result<QuantInstance> {
    let seed = trial_seed(s.seed0, t);
    let (w, x) = gaussian_layer(s.d_out, s.d_in, s.n, s.activations, seed)?;
    let cov = Covariance::from_activations(&x, true)?;
    let qspec = QuantSpec::new(s.bits, s.group)?;
    let (rtn, rtn_grid) = rtn_quantize(&w, &qspec)?;
    let cfg = CompressionConfig::quantization(qspec);
    let awp = Compressor::new(&w, &cov, &cfg).run()?;
    Ok(QuantInstance {
        seed,
        rtn_loss: activation_loss(&w, &rtn, &cov)?,
        awp_loss: activation_loss(&w, &awp.theta, &cov)?,
        trace_initial: awp.initial_normalized_loss,
        trace_final: awp.final_normalized_loss,
        feasible: awp.check_feasibility().is_ok() && rtn_grid.contains(&rtn, None),
    })
}

pub fn run_quant_suite(s: &QuantSuite) -> Result<QuantReport> {
    let per_instance = (0..s.trials)
        .into_par_iter()
        .map(|t| run_quant_instance(s, t))
        .collect::<Result<Vec<_>>>()?;
    let n = per_instance.len();
    let count = |f: &dyn Fn(&QuantInstance) -> bool| per_instance.iter().filter(|i| f(i)).count();
    Ok(QuantReport {
        suite: *s,
        awp_le_rtn: rate(count(&|i| i.awp_loss <= i.rtn_loss), n),
        awp_lt_rtn: rate(count(&|i| i.awp_loss < i.rtn_loss), n),
        trace_decreasing: rate(count(&|i| i.trace_final < i.trace_initial), n),
        loss_ratio: Distribution::of(
            &per_instance.iter().map(|i| gap(i.awp_loss, i.rtn_loss)).collect::<Vec<_>>(),
        ),
        feasibility_failures: count(&|i| !i.feasible),
        per_instance,
    })
}

/* ---------- joint ---------- */

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSuite {
    #[serde(default = "default_d_out")]
    pub d_out: usize,
    #[serde(default = "default_d_in")]
    pub d_in: usize,
    #[serde(default = "default_samples")]
    pub n: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_bits")]
    pub bits: u32,
    #[serde(default = "default_group")]
    pub group: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed0: u64,
    #[serde(default)]
    pub activations: ActivationModel,
}

fn default_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointInstance {
    pub seed: u64,
    pub awp_loss: f64,
    pub prune_then_quant_loss: f64,
    pub quant_then_prune_loss: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointReport {
    pub suite: JointSuite,
    /// Instances where AWP is at most both sequential pipelines.
    pub awp_le_both: f64,
    pub awp_le_prune_then_quant: f64,
    pub awp_le_quant_then_prune: f64,
    /// `awp_loss / min(sequential losses)`.
    pub loss_ratio: Option<Distribution>,
    pub feasibility_failures: usize,
    pub per_instance: Vec<JointInstance>,
}

fn run_joint_instance(s: &JointSuite, t: usize) -> Result<JointInstance> {
    let seed = trial_seed(s.seed0, t);
    let (w, x) = gaussian_layer(s.d_out, s.d_in, s.n, s.activations, seed)?;
    let cov = Covariance::from_activations(&x, true)?;
    let norms = ActivationNorms::from_activations(&x)?;
    let qspec = QuantSpec::new(s.bits, s.group)?;
    let spec = RowSparsitySpec::ratio(s.ratio, s.d_in)?;
    let cfg = CompressionConfig::joint(SparsityTarget::Ratio(s.ratio), qspec);
    let awp = Compressor::new(&w, &cov, &cfg).with_norms(&norms).run()?;
    let seq = |order| sequential_pipeline(&w, &norms, &cov, &spec, &qspec, order, AWQ_LITE_EXPONENT);
    let ptq = seq(ProjectionOrder::PruneThenQuant)?;
    let qtp = seq(ProjectionOrder::QuantThenPrune)?;
    Ok(JointInstance {
        seed,
        awp_loss: activation_loss(&w, &awp.theta, &cov)?,
        prune_then_quant_loss: activation_loss(&w, &ptq.theta, &cov)?,
        quant_then_prune_loss: activation_loss(&w, &qtp.theta, &cov)?,
        feasible: feasibility_failures(&[&awp, &ptq, &qtp]) == 0,
    })
}

pub fn run_joint_suite(s: &JointSuite) -> Result<JointReport> {
    let per_instance = (0..s.trials)
        .into_par_iter()
        .map(|t| run_joint_instance(s, t))
        .collect::<Result<Vec<_>>>()?;
    let n = per_instance.len();
    let count = |f: &dyn Fn(&JointInstance) -> bool| per_instance.iter().filter(|i| f(i)).count();
    Ok(JointReport {
        suite: *s,
        awp_le_both: rate(
            count(&|i| i.awp_loss <= i.prune_then_quant_loss && i.awp_loss <= i.quant_then_prune_loss),
            n,
        ),
        awp_le_prune_then_quant: rate(count(&|i| i.awp_loss <= i.prune_then_quant_loss), n),
        awp_le_quant_then_prune: rate(count(&|i| i.awp_loss <= i.quant_then_prune_loss), n),
        loss_ratio: Distribution::of(
            &per_instance
                .iter()
                .map(|i| gap(i.awp_loss, i.prune_then_quant_loss.min(i.quant_then_prune_loss)))
                .collect::<Vec<_>>(),
        ),
        feasibility_failures: count(&|i| !i.feasible),
        per_instance,
    })
}

/* ---------- dispatch ---------- */

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuiteSpec {
    Recovery(RecoverySuite),
    Oracle(OracleSuite),
    Quant(QuantSuite),
    Joint(JointSuite),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuiteReport {
    Recovery(RecoveryReport),
    Oracle(OracleReport),
    Quant(QuantReport),
    Joint(JointReport),
}

impl SuiteSpec {
    fn from_value(mut v: Value) -> Result<Self> {
        if let Value::Object(map) = &mut v {
            map.entry("kind").or_insert_with(|| Value::from("recovery"));
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn run(&self) -> Result<SuiteReport> {
        Ok(match self {
            SuiteSpec::Recovery(s) => SuiteReport::Recovery(run_recovery_suite(s)?),
            SuiteSpec::Oracle(s) => SuiteReport::Oracle(run_oracle_suite(s)?),
            SuiteSpec::Quant(s) => SuiteReport::Quant(run_quant_suite(s)?),
            SuiteSpec::Joint(s) => SuiteReport::Joint(run_joint_suite(s)?),
        })
    }
}

/// Parses a suite file: an array of specs or a single spec.
pub fn parse_suites(json: &str) -> Result<Vec<SuiteSpec>> {
    match serde_json::from_str::<Value>(json)? {
        Value::Array(items) => items.into_iter().map(SuiteSpec::from_value).collect(),
        single @ Value::Object(_) => Ok(vec![SuiteSpec::from_value(single)?]),
        _ => Err(AwpError::InvalidConfig("suite file must hold an object or an array".into())),
    }
}

/// Runs the suites in order.
pub fn run_suites(suites: &[SuiteSpec]) -> Result<Vec<SuiteReport>> {
    suites.iter().map(SuiteSpec::run).collect()
}

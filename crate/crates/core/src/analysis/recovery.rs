use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{CompressionConfig, Compressor, InitStrategy, StepRule};
use crate::error::{AwpError, Result};
use crate::projections::SparsityTarget;
use crate::tensor::{Cholesky, Covariance, DenseMatrix};

/// Slack, relative to `‖W*_i‖`, below which a bound comparison counts as
/// satisfied. Without it the geometric term falls under f64 round-off once
/// `t` passes about 50.
pub const BOUND_FLOOR: f64 = 1e-12;

/// Parameters of one planted-sparse instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub noise_level: f64,
    /// Rows of the planted matrix.
    #[serde(default = "default_rows")]
    pub rows: usize,
}

fn default_rows() -> usize {
    8
}

/// Planted `k`-sparse rows observed through `C^{1/2}` with controlled noise.
#[derive(Debug, Clone)]
pub struct RecoveryTrial {
    pub spec: TrialSpec,
    pub seed: u64,
    pub cov: Covariance<f64>,
    pub w_star: DenseMatrix<f64>,
    pub w: DenseMatrix<f64>,
    /// `‖(W − W*)_i C^{1/2}‖₂` per row.
    pub noise_norms: Vec<f64>,
}

pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws a trial: `X` standard normal (`d × n`), `C = X Xᵀ / n`, supports
/// uniform without replacement, values uniform on `±[0.5, 2]`. Noise rows
/// solve `E_i L = g_i` with `C = L Lᵀ` and `‖g_i‖ = noise_level`, so
/// `E_i C E_iᵀ = noise_level²` exactly.
pub fn gen_recovery_trial(spec: TrialSpec, seed: u64) -> Result<RecoveryTrial> {
    let TrialSpec { d, k, n, noise_level, rows } = spec;
    if d == 0 || n < d {
        return Err(AwpError::InvalidConfig(format!("need 1 <= d <= n, got d={d}, n={n}")));
    }
    if 3 * k > d {
        return Err(AwpError::InvalidConfig(format!("need k <= d/3, got k={k}, d={d}")));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(AwpError::InvalidConfig(format!("noise level {noise_level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = standard_normal_matrix(d, n, &mut rng);
    let cov = Covariance::from_activations(&x, true)?;
    let chol = Cholesky::factor(cov.matrix())
        .map_err(|_| AwpError::Singular(format!("covariance of trial {seed} is singular")))?;

    let mut w_star = DenseMatrix::zeros(rows, d);
    for i in 0..rows {
        for j in sample(&mut rng, d, k) {
            let mag: f64 = rng.random_range(0.5..=2.0);
            let v = if rng.random_bool(0.5) { mag } else { -mag };
            w_star.set(i, j, v);
        }
    }

    let mut w = w_star.clone();
    let mut noise_norms = vec![0.0; rows];
    if noise_level > 0.0 {
        for i in 0..rows {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g: Vec<f64> = g.iter().map(|v| v * noise_level / norm).collect();
            let e = chol.solve_row_times_lower(&g);
            for (j, ev) in e.iter().enumerate() {
                w.set(i, j, w.get(i, j) + ev);
            }
            let actual: Vec<f64> = (0..d).map(|j| w.get(i, j) - w_star.get(i, j)).collect();
            noise_norms[i] = cov.quadratic_form(&actual).max(0.0).sqrt();
        }
    }
    Ok(RecoveryTrial {
        spec,
        seed,
        cov,
        w_star,
        w,
        noise_norms,
    })
}

/// Per-row check of the IHT error bound along a sequence of iterates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// `errors[t][i] = ‖Θ_i(t) − W*_i‖₂`.
    pub errors: Vec<Vec<f64>>,
    /// `bounds[t][i] = ‖W*_i‖₂ / 2^t + 4‖e_i‖₂`.
    pub bounds: Vec<Vec<f64>>,
    pub satisfied: Vec<Vec<bool>>,
    pub pairs_checked: usize,
    pub pairs_satisfied: usize,
    /// `max_i ⌈log₂(‖W*_i‖ / ‖e_i‖)⌉`; `None` when noiseless.
    pub t_prime: Option<usize>,
    /// `‖Θ(t′) − W*‖_F` (last iterate when `t′` is unavailable).
    pub aggregate_error: f64,
    /// `5 ‖(W − W*) C^{1/2}‖_F`.
    pub aggregate_bound: f64,
    pub aggregate_satisfied: bool,
    /// Rows whose final support equals the planted support.
    pub rows_support_recovered: usize,
}

impl BoundReport {
    pub fn satisfaction_rate(&self) -> f64 {
        if self.pairs_checked == 0 {
            1.0
        } else {
            self.pairs_satisfied as f64 / self.pairs_checked as f64
        }
    }

    pub fn all_satisfied(&self) -> bool {
        self.pairs_satisfied == self.pairs_checked
    }
}

fn row_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Evaluates the per-row bound at every iterate and the aggregate bound at
/// `t′`. Iterates past the end of the sequence are taken equal to the last
/// one (the run stopped at a fixed point).
pub fn check_recovery_bound(
    trial: &RecoveryTrial,
    iterates: &[DenseMatrix<f64>],
) -> Result<BoundReport> {
    let (rows, d) = trial.w_star.shape();
    if iterates.is_empty() {
        return Err(AwpError::InvalidConfig("no iterates to check".into()));
    }
    if let Some(bad) = iterates.iter().find(|m| m.shape() != (rows, d)) {
        return Err(AwpError::Shape(format!(
            "iterate {:?} for trial {:?}",
            bad.shape(),
            (rows, d)
        )));
    }
    let star_norms: Vec<f64> = (0..rows).map(|i| row_dist(trial.w_star.row(i), &vec![0.0; d])).collect();
    let mut report = BoundReport {
        errors: Vec::with_capacity(iterates.len()),
        bounds: Vec::with_capacity(iterates.len()),
        satisfied: Vec::with_capacity(iterates.len()),
        pairs_checked: 0,
        pairs_satisfied: 0,
        t_prime: None,
        aggregate_error: 0.0,
        aggregate_bound: 0.0,
        aggregate_satisfied: false,
        rows_support_recovered: 0,
    };
    for (t, theta) in iterates.iter().enumerate() {
        let mut errs = Vec::with_capacity(rows);
        let mut bnds = Vec::with_capacity(rows);
        let mut oks = Vec::with_capacity(rows);
        for i in 0..rows {
            let err = row_dist(theta.row(i), trial.w_star.row(i));
            let bound = star_norms[i] / 2f64.powi(t.min(1000) as i32) + 4.0 * trial.noise_norms[i];
            let ok = err <= bound + BOUND_FLOOR * star_norms[i];
            report.pairs_checked += 1;
            report.pairs_satisfied += ok as usize;
            errs.push(err);
            bnds.push(bound);
            oks.push(ok);
        }
        report.errors.push(errs);
        report.bounds.push(bnds);
        report.satisfied.push(oks);
    }

    let noise_frob = trial.noise_norms.iter().map(|v| v * v).sum::<f64>().sqrt();
    let star_frob = star_norms.iter().map(|v| v * v).sum::<f64>().sqrt();
    report.t_prime = (0..rows)
        .map(|i| {
            let e = trial.noise_norms[i];
            (e > 0.0).then(|| (star_norms[i] / e).log2().ceil().max(0.0) as usize)
        })
        .collect::<Option<Vec<_>>>()
        .and_then(|v| v.into_iter().max());
    let at = report.t_prime.unwrap_or(usize::MAX).min(iterates.len() - 1);
    let theta = &iterates[at];
    report.aggregate_error = (0..rows)
        .map(|i| row_dist(theta.row(i), trial.w_star.row(i)).powi(2))
        .sum::<f64>()
        .sqrt();
    report.aggregate_bound = 5.0 * noise_frob;
    report.aggregate_satisfied =
        report.aggregate_error <= report.aggregate_bound + BOUND_FLOOR * star_frob;

    let last = iterates.last().expect("non-empty");
    report.rows_support_recovered = (0..rows)
        .filter(|&i| {
            last.row(i)
                .iter()
                .zip(trial.w_star.row(i))
                .all(|(a, b)| (*a != 0.0) == (*b != 0.0))
        })
        .count();
    Ok(report)
}

/// Runs unit-step IHT from `Θ(0) = 0` on a trial through the engine and
/// returns every iterate.
pub fn run_iht(trial: &RecoveryTrial, max_iters: usize) -> Result<Vec<DenseMatrix<f64>>> {
    let mut cfg = CompressionConfig::pruning(SparsityTarget::Keep(trial.spec.k));
    cfg.step_rule = StepRule::Explicit(1.0);
    cfg.init = InitStrategy::Provided;
    cfg.max_iters = max_iters;
    cfg.grad_tol = 1e-13;
    let zeros = DenseMatrix::zeros(trial.w.rows(), trial.w.cols());
    let mut iterates = Vec::with_capacity(max_iters + 1);
    Compressor::new(&trial.w, &trial.cov, &cfg)
        .with_initial(&zeros)
        .run_observed(|_, theta| iterates.push(theta.clone()))?;
    Ok(iterates)
}

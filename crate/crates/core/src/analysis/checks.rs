use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{AwpError, Result};
use crate::projections::sparsity::top_k_indices;
use crate::scalar::Scalar;
use crate::tensor::covariance::frobenius_inner;
use crate::tensor::matrix::row_times_matrix;
use crate::tensor::{Covariance, DenseMatrix};

/// Restricted strong convexity and smoothness constants of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RscRsm {
    /// `2 λmin(C)`.
    pub alpha: f64,
    /// `2 λmax(C)`.
    pub beta: f64,
    /// `β / α`; infinite for singular `C`.
    pub kappa: f64,
}

pub fn rsc_rsm_kappa<T: Scalar>(cov: &Covariance<T>) -> Result<RscRsm> {
    let s = cov.spectral()?;
    Ok(RscRsm {
        alpha: s.rsc().as_f64(),
        beta: s.rsm().as_f64(),
        kappa: s.kappa.as_f64(),
    })
}

/// Coordinates compared in full below this many entries; above it a seeded
/// sample of [`GRAD_CHECK_SAMPLE`] is used.
pub const GRAD_CHECK_FULL: usize = 256;
pub const GRAD_CHECK_SAMPLE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    /// Largest `|fd − g| / max(|fd|, |g|, ‖g‖_∞)`; zero when the gradient
    /// and every difference quotient vanish.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
}

fn objective(w: &DenseMatrix<f64>, theta: &DenseMatrix<f64>, cov: &Covariance<f64>) -> Result<f64> {
    let d = w.sub(theta)?;
    Ok(frobenius_inner(&d, &cov.right_multiply(&d)?))
}

/// Compares central differences of `f(Θ) = tr[(W − Θ) C (W − Θ)ᵀ]` with the
/// analytic gradient `−2 (W − Θ) C`.
///
/// `epsilon` defaults to `1e-5·(1 + ‖Θ‖_∞)`.
pub fn finite_diff_grad_check(
    w: &DenseMatrix<f64>,
    theta: &DenseMatrix<f64>,
    cov: &Covariance<f64>,
    epsilon: Option<f64>,
    seed: u64,
) -> Result<GradCheck> {
    let grad = cov.right_multiply(&w.sub(theta)?)?.scale(-2.0)?;
    let eps = epsilon.unwrap_or(1e-5 * (1.0 + theta.max_abs()));
    if !(eps > 0.0) {
        return Err(AwpError::InvalidConfig(format!("difference step {eps}")));
    }
    let total = theta.rows() * theta.cols();
    let coords: Vec<usize> = if total <= GRAD_CHECK_FULL {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, total, GRAD_CHECK_SAMPLE).into_vec();
        c.sort_unstable();
        c
    };
    let scale = grad.max_abs();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        coords_checked: coords.len(),
    };
    let mut probe = theta.clone();
    for idx in coords {
        let (i, j) = (idx / theta.cols(), idx % theta.cols());
        let orig = theta.get(i, j);
        probe.set(i, j, orig + eps);
        let up = objective(w, &probe, cov)?;
        probe.set(i, j, orig - eps);
        let down = objective(w, &probe, cov)?;
        probe.set(i, j, orig);
        let fd = (up - down) / (2.0 * eps);
        if !fd.is_finite() {
            return Err(AwpError::NonFinite(format!("difference quotient at ({i}, {j})")));
        }
        let an = grad.get(i, j);
        let abs = (fd - an).abs();
        let denom = fd.abs().max(an.abs()).max(scale);
        out.max_abs_error = out.max_abs_error.max(abs);
        if denom > 0.0 {
            out.max_rel_error = out.max_rel_error.max(abs / denom);
        }
    }
    Ok(out)
}

/// Single-row iterative hard thresholding,
/// `θ ← H_k(θ + η (w − θ) C)`, with the same arithmetic as the engine.
/// Returns `θ(0), …, θ(iters)`.
pub fn iht_row<T: Scalar>(
    w_row: &[T],
    cov: &Covariance<T>,
    k: usize,
    eta: T,
    theta0: &[T],
    iters: usize,
) -> Result<Vec<Vec<T>>> {
    let d = w_row.len();
    if cov.dim() != d || theta0.len() != d {
        return Err(AwpError::Shape("row, start and covariance widths differ".into()));
    }
    if k > d {
        return Err(AwpError::InvalidConfig(format!("keep count {k} exceeds width {d}")));
    }
    let mut out = Vec::with_capacity(iters + 1);
    let mut theta = theta0.to_vec();
    out.push(theta.clone());
    let mut g = vec![T::zero(); d];
    for _ in 0..iters {
        let resid: Vec<T> = w_row.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
        row_times_matrix(&resid, cov.matrix(), &mut g);
        let z: Vec<T> = theta.iter().zip(&g).map(|(&t, &gv)| t + eta * gv).collect();
        let mags: Vec<T> = z.iter().map(|v| v.abs()).collect();
        let mut next = vec![T::zero(); d];
        let keep = if k == d { (0..d).collect() } else { top_k_indices(&mags, k) };
        for j in keep {
            next[j] = z[j];
        }
        theta = next;
        out.push(theta.clone());
    }
    Ok(out)
}

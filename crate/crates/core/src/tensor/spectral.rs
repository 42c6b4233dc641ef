//! Extreme eigenvalues of a covariance without an eigendecomposition.
//!
//! Both ends of the spectrum come from one Lanczos run (a power iteration
//! that keeps its whole Krylov basis) started from a seeded vector. The
//! extreme Ritz values of the tridiagonal projection are located by Sturm
//! bisection. Plain power iteration, and its shifted variant for `λmin`,
//! stall on clustered spectra such as sample covariances of Gaussian data;
//! the Krylov space contains every power iterate, so this is never slower,
//! and with full reorthogonalization it is exact after `dim` steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::matrix::{dot, row_times_matrix, DenseMatrix};
use crate::error::{AwpError, Result};
use crate::scalar::Scalar;

/// Fixed seed for the start vector, so estimates are reproducible.
const START_SEED: u64 = 0x00A1_1CE5;

/// Tolerance and iteration cap for the Lanczos run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    /// Relative change of the extreme Ritz values, over two consecutive
    /// steps, that counts as converged.
    pub tol: f64,
    /// Iteration cap; `None` means `max(10·dim, 1000)`.
    pub max_iters: Option<usize>,
}

impl SpectralOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iters: None,
        }
    }

    /// Default tolerance: `1e-10`, loosened to a few ulps for `f32`.
    pub fn default_for<T: Scalar>() -> Self {
        Self::with_tol(1e-10f64.max(64.0 * T::epsilon().as_f64()))
    }

    fn cap(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or((10 * dim).max(1000))
    }

    /// Relative size below which `λmin` is treated as an exact zero.
    pub fn singular_threshold(&self) -> f64 {
        self.tol.sqrt()
    }
}

/// Extreme eigenvalues and derived constants of a PSD matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary<T> {
    pub lambda_min: T,
    pub lambda_max: T,
    pub frob_norm: T,
    /// `λmax / λmin`, or `+∞` when `λmin` is numerically zero.
    pub kappa: T,
}

impl<T: Scalar> SpectralSummary<T> {
    /// Restricted strong convexity constant `2·λmin`.
    pub fn rsc(&self) -> T {
        T::of(2.0) * self.lambda_min
    }

    /// Restricted smoothness constant `2·λmax`.
    pub fn rsm(&self) -> T {
        T::of(2.0) * self.lambda_max
    }
}

/// Unclamped extreme eigenvalue estimates; `lambda_min` may be negative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawExtremes<T> {
    pub lambda_min: T,
    pub lambda_max: T,
}

pub(crate) fn raw_extremes<T: Scalar>(
    c: &DenseMatrix<T>,
    opts: &SpectralOptions,
) -> Result<RawExtremes<T>> {
    let n = c.rows();
    if n == 0 {
        return Ok(RawExtremes {
            lambda_min: T::zero(),
            lambda_max: T::zero(),
        });
    }
    // C is symmetric, so v·C equals C·v.
    let (lambda_min, lambda_max) = lanczos_extremes(n, opts, |v, out| row_times_matrix(v, c, out))?;
    Ok(RawExtremes {
        lambda_min,
        lambda_max,
    })
}

/// Extreme eigenvalues of a symmetric PSD matrix.
pub fn spectral_extremes<T: Scalar>(
    c: &DenseMatrix<T>,
    opts: &SpectralOptions,
) -> Result<SpectralSummary<T>> {
    let raw = raw_extremes(c, opts)?;
    let frob = c.frobenius()?;
    // Ritz values never exceed λmax ≤ ‖C‖_F; allow rounding only.
    let slack = T::of(1e-12).max(T::of(16.0) * T::epsilon());
    if raw.lambda_max > frob * (T::one() + slack) {
        return Err(AwpError::InvalidCovariance(format!(
            "largest eigenvalue {} exceeds Frobenius norm {}",
            raw.lambda_max, frob
        )));
    }
    let lambda_max = raw.lambda_max.min(frob).max(T::zero());
    let singular = T::of(opts.singular_threshold()) * lambda_max;
    let lambda_min = if raw.lambda_min <= singular {
        T::zero()
    } else {
        raw.lambda_min.min(lambda_max)
    };
    let kappa = if lambda_min > T::zero() {
        lambda_max / lambda_min
    } else {
        T::infinity()
    };
    Ok(SpectralSummary {
        lambda_min,
        lambda_max,
        frob_norm: frob,
        kappa,
    })
}

/// Smallest and largest eigenvalue of a symmetric operator given as a
/// mat-vec closure.
fn lanczos_extremes<T: Scalar>(
    dim: usize,
    opts: &SpectralOptions,
    mut apply: impl FnMut(&[T], &mut [T]),
) -> Result<(T, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q: Vec<T> = (0..dim)
        .map(|_| T::of(rng.random_range(0.5..1.5)))
        .collect();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x = *x / nq);

    let tol = opts.tol;
    let cap = opts.cap(dim);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![T::zero(); dim];
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut change = f64::INFINITY;
    for j in 0..cap.min(dim) {
        apply(&q, &mut w);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(AwpError::NonFinite("Lanczos iteration".into()));
        }
        let a = dot(&q, &w);
        basis.push(std::mem::take(&mut q));
        // Full reorthogonalization, twice, subsumes the three-term recurrence.
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, &y)| *x = *x - p * y);
            }
        }
        alpha.push(a.as_f64());
        let b = dot(&w, &w).sqrt().as_f64();
        let (lo, hi) = tridiagonal_extremes(&alpha, &beta);
        let scale = lo.abs().max(hi.abs());
        if scale == 0.0 && b == 0.0 {
            return Ok((T::zero(), T::zero()));
        }
        history.push((lo, hi));
        if history.len() >= 3 {
            let h = &history[history.len() - 3..];
            change = h
                .windows(2)
                .map(|p| (p[1].0 - p[0].0).abs().max((p[1].1 - p[0].1).abs()))
                .fold(0.0, f64::max)
                / scale;
        }
        let invariant = b <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        if invariant || j + 1 == dim || change <= tol {
            return Ok((T::of(lo), T::of(hi)));
        }
        beta.push(b);
        let bt = T::of(b);
        q = w.iter().map(|&x| x / bt).collect();
        w = vec![T::zero(); dim];
    }
    Err(AwpError::NotConverged { iters: cap, change })
}

/// Number of eigenvalues of the tridiagonal matrix below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in alpha.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] / d };
        d = a - x - off;
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest and largest eigenvalue of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta`, by bisection.
fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + beta.get(i).map_or(0.0, |b| b.abs());
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    if lo == hi {
        return (lo, hi);
    }
    let pad = f64::EPSILON * lo.abs().max(hi.abs());
    let (lo, hi) = (lo - pad, hi + pad);
    let bisect = |target: usize| {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(alpha, beta, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SpectralOptions {
        SpectralOptions::default_for::<f64>()
    }

    #[test]
    fn diagonal_closed_form() {
        let c = DenseMatrix::<f64>::from_diag(&[4.0, 1.0]);
        let s = spectral_extremes(&c, &opts()).unwrap();
        assert!((s.lambda_max - 4.0).abs() < 1e-9);
        assert!((s.lambda_min - 1.0).abs() < 1e-9);
        assert!((s.kappa - 4.0).abs() < 1e-8);
        assert_eq!(s.frob_norm, 17f64.sqrt());
    }

    #[test]
    fn isotropic_has_unit_condition() {
        let c = DenseMatrix::<f64>::identity(6).scale(2.5).unwrap();
        let s = spectral_extremes(&c, &opts()).unwrap();
        assert!((s.lambda_max - 2.5).abs() < 1e-12);
        assert!((s.lambda_min - 2.5).abs() < 1e-12);
        assert!((s.kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_gives_infinite_kappa() {
        // 4-dim activations, 2 samples
        let x = DenseMatrix::from_rows(&[
            vec![1.0, 0.5],
            vec![-0.3, 2.0],
            vec![0.7, 0.1],
            vec![1.1, -0.4],
        ])
        .unwrap();
        let c = x.gram().unwrap();
        let o = opts();
        let s = spectral_extremes(&c, &o).unwrap();
        assert!(s.lambda_min <= o.tol * s.lambda_max);
        assert!(s.kappa.is_infinite());
    }

    #[test]
    fn zero_matrix() {
        let s = spectral_extremes(&DenseMatrix::<f64>::zeros(3, 3), &opts()).unwrap();
        assert_eq!(s.lambda_max, 0.0);
        assert_eq!(s.lambda_min, 0.0);
    }

    #[test]
    fn indefinite_detected_in_raw_estimate() {
        let c = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -3.0]]).unwrap();
        let raw = raw_extremes(&c, &opts()).unwrap();
        assert!(raw.lambda_min < -2.9);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let diag: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let c = DenseMatrix::from_diag(&diag);
        let o = SpectralOptions {
            tol: 1e-16,
            max_iters: Some(3),
        };
        assert!(matches!(
            spectral_extremes(&c, &o),
            Err(AwpError::NotConverged { iters: 3, .. })
        ));
    }

    #[test]
    fn tridiagonal_bisection() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let (lo, hi) = tridiagonal_extremes(&[2.0, 2.0], &[1.0]);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
        assert_eq!(sturm_count(&[2.0, 2.0], &[1.0], 2.0), 1);
    }

    #[test]
    fn clustered_spectrum_converges() {
        // Sample covariance of Gaussian data: a dense cluster around 1.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DenseMatrix::from_fn(32, 2048, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let c = x.gram().unwrap().scale(1.0 / 2048.0).unwrap();
        let s = spectral_extremes(&c, &opts()).unwrap();
        assert!(s.lambda_min > 0.6 && s.lambda_max < 1.4, "{s:?}");
        assert!(s.kappa > 1.2 && s.kappa < 2.0, "{s:?}");
    }
}

use std::borrow::Cow;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::matrix::{dot, pairwise_sum, row_times_matrix, DenseMatrix};
use super::spectral::{raw_extremes, spectral_extremes, SpectralOptions, SpectralSummary};
use crate::error::{AwpError, Result};
use crate::scalar::Scalar;

/// Input-activation second-moment matrix `C = X Xᵀ` (optionally `/ n`).
#[derive(Debug, Clone)]
pub struct Covariance<T> {
    matrix: DenseMatrix<T>,
    normalized: bool,
    sample_count: Option<usize>,
    spectral: OnceLock<SpectralSummary<T>>,
}

impl<T: Scalar> Covariance<T> {
    /// Builds `C` from activations `X` (`d_in × n`, one column per token).
    pub fn from_activations(x: &DenseMatrix<T>, normalize: bool) -> Result<Self> {
        let n = x.cols();
        if n == 0 || x.rows() == 0 {
            return Err(AwpError::Shape("activations must be non-empty".into()));
        }
        if !x.is_finite() {
            return Err(AwpError::NonFiniteInput("activations".into()));
        }
        let mut c = x.gram()?;
        if normalize {
            let inv = T::one() / T::of(n as f64);
            c = c.map(|v| v * inv);
        }
        Ok(Self {
            matrix: c,
            normalized: normalize,
            sample_count: Some(n),
            spectral: OnceLock::new(),
        })
    }

    /// Wraps a precomputed matrix after checking symmetry and positive
    /// semidefiniteness.
    pub fn from_matrix(
        matrix: DenseMatrix<T>,
        normalized: bool,
        sample_count: Option<usize>,
    ) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(AwpError::InvalidCovariance(format!(
                "not square: {:?}",
                matrix.shape()
            )));
        }
        if !matrix.is_finite() {
            return Err(AwpError::NonFiniteInput("covariance".into()));
        }
        let tol = T::of(1e-10).max(T::of(8.0) * T::epsilon()) * matrix.max_abs();
        for i in 0..n {
            for j in i + 1..n {
                if (matrix.get(i, j) - matrix.get(j, i)).abs() > tol {
                    return Err(AwpError::InvalidCovariance(format!(
                        "asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let opts = SpectralOptions::default_for::<T>();
        let raw = raw_extremes(&matrix, &opts)?;
        if raw.lambda_min < -T::of(1e-8) * raw.lambda_max.abs() {
            return Err(AwpError::InvalidCovariance(format!(
                "not positive semidefinite (eigenvalue {})",
                raw.lambda_min
            )));
        }
        Ok(Self {
            matrix,
            normalized,
            sample_count,
            spectral: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.sample_count
    }

    /// The `(1/n)·X Xᵀ` form; borrows when already normalized.
    pub fn to_normalized(&self) -> Result<Cow<'_, Self>> {
        if self.normalized {
            return Ok(Cow::Borrowed(self));
        }
        let n = self.sample_count.ok_or_else(|| {
            AwpError::InvalidConfig("normalizing a covariance needs its sample count".into())
        })?;
        let inv = T::one() / T::of(n as f64);
        Ok(Cow::Owned(Self {
            matrix: self.matrix.map(|v| v * inv),
            normalized: true,
            sample_count: self.sample_count,
            spectral: OnceLock::new(),
        }))
    }

    pub fn frobenius(&self) -> Result<T> {
        self.matrix.frobenius()
    }

    /// Spectral summary at the default tolerance, computed once.
    pub fn spectral(&self) -> Result<SpectralSummary<T>> {
        if let Some(s) = self.spectral.get() {
            return Ok(*s);
        }
        let s = spectral_extremes(&self.matrix, &SpectralOptions::default_for::<T>())?;
        Ok(*self.spectral.get_or_init(|| s))
    }

    /// Spectral summary at a caller-chosen tolerance (not cached).
    pub fn spectral_with(&self, opts: &SpectralOptions) -> Result<SpectralSummary<T>> {
        spectral_extremes(&self.matrix, opts)
    }

    /// `R · C` for a residual `R` with `dim` columns.
    pub fn right_multiply(&self, r: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if r.cols() != self.dim() {
            return Err(AwpError::Shape(format!(
                "{} columns against covariance of dim {}",
                r.cols(),
                self.dim()
            )));
        }
        r.matmul(&self.matrix)
    }

    /// `v C vᵀ` for a single row vector.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        let mut cv = vec![T::zero(); self.dim()];
        row_times_matrix(v, &self.matrix, &mut cv);
        dot(v, &cv)
    }
}

/// `Σ_ij a_ij b_ij`, summed per row then across rows in a fixed order.
pub(crate) fn frobenius_inner<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> T {
    let per_row: Vec<T> = (0..a.rows())
        .into_par_iter()
        .map(|i| dot(a.row(i), b.row(i)))
        .collect();
    pairwise_sum(&per_row)
}

/// Turns the trace `tr[D C Dᵀ]` into a loss, clamping round-off negatives.
///
/// A trace below `−1e-10·‖W‖_F²·λmax(C)` is not round-off and means `C`
/// is not PSD.
pub(crate) fn loss_from_trace<T: Scalar>(
    trace: T,
    w_frob_sq: T,
    cov: &Covariance<T>,
) -> Result<T> {
    if !trace.is_finite() {
        return Err(AwpError::NonFinite("activation loss".into()));
    }
    if trace >= T::zero() {
        return Ok(trace.sqrt());
    }
    let lambda_max = cov.spectral()?.lambda_max;
    let floor = -T::of(1e-10) * w_frob_sq * lambda_max;
    if trace >= floor {
        Ok(T::zero())
    } else {
        Err(AwpError::InvalidCovariance(format!(
            "negative quadratic trace {trace} below clamp threshold {floor}"
        )))
    }
}

/// Activation-aware loss `‖(W − Θ) C^{1/2}‖_F`, evaluated as
/// `√tr[(W − Θ) C (W − Θ)ᵀ]` so no matrix square root is needed.
pub fn activation_loss<T: Scalar>(
    w: &DenseMatrix<T>,
    theta: &DenseMatrix<T>,
    cov: &Covariance<T>,
) -> Result<T> {
    let d = w.sub(theta)?;
    let dc = cov.right_multiply(&d)?;
    let w_frob = w.frobenius()?;
    loss_from_trace(frobenius_inner(&d, &dc), w_frob * w_frob, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn covariance_hand_product() {
        let x = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let c = Covariance::from_activations(&x, false).unwrap();
        assert_eq!(c.matrix(), &m(&[&[5.0, 2.0], &[2.0, 1.0]]));
        let cn = Covariance::from_activations(&x, true).unwrap();
        assert_eq!(cn.matrix(), &m(&[&[2.5, 1.0], &[1.0, 0.5]]));
    }

    #[test]
    fn identity_activations() {
        let c = Covariance::from_activations(&DenseMatrix::<f64>::identity(4), true).unwrap();
        assert_eq!(c.matrix(), &DenseMatrix::from_diag(&[0.25; 4]));
    }

    #[test]
    fn empty_and_nonfinite_rejected() {
        assert!(Covariance::from_activations(&DenseMatrix::<f64>::zeros(3, 0), true).is_err());
        let bad = DenseMatrix::from_vec_unchecked(1, 2, vec![1.0, f64::INFINITY]);
        assert!(matches!(
            Covariance::from_activations(&bad, true),
            Err(AwpError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn from_matrix_validates() {
        assert!(Covariance::from_matrix(m(&[&[2.0, 1.0], &[0.0, 2.0]]), true, None).is_err());
        assert!(Covariance::from_matrix(m(&[&[1.0, 2.0], &[2.0, 1.0]]), true, None).is_err());
        assert!(Covariance::from_matrix(m(&[&[2.0, 1.0], &[1.0, 2.0]]), true, None).is_ok());
    }

    #[test]
    fn loss_special_cases() {
        let w = m(&[&[1.0, -2.0, 0.5], &[0.3, 0.0, 4.0]]);
        let c = Covariance::from_activations(&DenseMatrix::identity(3), false).unwrap();
        assert_eq!(activation_loss(&w, &w, &c).unwrap(), 0.0);
        let theta = m(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 4.0]]);
        let direct = w.sub(&theta).unwrap().frobenius().unwrap();
        let loss = activation_loss(&w, &theta, &c).unwrap();
        assert!((loss - direct).abs() < 1e-15);
    }

    #[test]
    fn loss_shape_mismatch() {
        let w = DenseMatrix::<f64>::zeros(2, 3);
        let c = Covariance::from_activations(&DenseMatrix::identity(2), true).unwrap();
        assert!(matches!(activation_loss(&w, &w, &c), Err(AwpError::Shape(_))));
    }

    #[test]
    fn clamp_distinguishes_noise_from_invalid() {
        let c = Covariance::from_activations(&DenseMatrix::<f64>::identity(2), false).unwrap();
        assert_eq!(loss_from_trace(-1e-14, 1.0, &c).unwrap(), 0.0);
        assert!(loss_from_trace(-1e-3, 1.0, &c).is_err());
    }

    #[test]
    fn to_normalized_divides_by_n() {
        let x = m(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, -1.0]]);
        let raw = Covariance::from_activations(&x, false).unwrap();
        let norm = raw.to_normalized().unwrap();
        let direct = Covariance::from_activations(&x, true).unwrap();
        assert!(norm.matrix().max_abs_diff(direct.matrix()).unwrap() < 1e-15);
    }
}

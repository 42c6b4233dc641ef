//! Layer-wise comparison compressors: magnitude pruning, Wanda, round-to-
//! nearest, an l1-scaled AWQ-style quantizer, and sequential prune/quantize
//! pipelines built from them.
//!
//! The AWQ-style quantizer uses one fixed exponent on the activation scales
//! instead of a per-layer search, so it is a scaled RTN rather than a
//! reproduction of the full method.

use std::time::Instant;

use crate::engine::{CompressionResult, LossTrace, Mode, StopReason, TraceRecord};
use crate::error::{AwpError, Result};
use crate::projections::{
    fit_quant_grid, project_row_sparse, quantize_to_grid, top_k_mask, ProjectionOrder, QuantGrid,
    QuantSpec, RowSparsitySpec, SparsityMask,
};
use crate::scalar::Scalar;
use crate::tensor::{activation_loss, dot, Covariance, DenseMatrix};

/// Per-input-channel activation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationNorms<T> {
    /// `‖X[j,:]‖₂` for each input channel `j`.
    pub l2_row_norms: Vec<T>,
    /// `‖X[j,:]‖₁ / n`; unavailable when only a covariance is known.
    pub l1_mean_norms: Option<Vec<T>>,
}

impl<T: Scalar> ActivationNorms<T> {
    pub fn from_activations(x: &DenseMatrix<T>) -> Result<Self> {
        if x.cols() == 0 {
            return Err(AwpError::Shape("activations have no samples".into()));
        }
        let n = T::of(x.cols() as f64);
        let l2 = x.row_iter().map(|r| dot(r, r).sqrt()).collect();
        let l1 = x
            .row_iter()
            .map(|r| r.iter().fold(T::zero(), |a, v| a + v.abs()) / n)
            .collect();
        Ok(Self {
            l2_row_norms: l2,
            l1_mean_norms: Some(l1),
        })
    }

    /// Row norms from the covariance diagonal: `‖X[j,:]‖₂² = n·C_jj` for a
    /// normalized covariance. Without a sample count the norms are off by a
    /// common factor, which leaves Wanda masks unchanged.
    pub fn from_covariance(cov: &Covariance<T>) -> Self {
        let factor = match (cov.is_normalized(), cov.sample_count()) {
            (true, Some(n)) => T::of(n as f64),
            _ => T::one(),
        };
        let c = cov.matrix();
        Self {
            l2_row_norms: (0..cov.dim())
                .map(|j| (c.get(j, j).max(T::zero()) * factor).sqrt())
                .collect(),
            l1_mean_norms: None,
        }
    }

    pub fn uniform(d_in: usize, value: T) -> Self {
        Self {
            l2_row_norms: vec![value; d_in],
            l1_mean_norms: Some(vec![value; d_in]),
        }
    }

    pub fn dim(&self) -> usize {
        self.l2_row_norms.len()
    }

    fn check_dim(&self, d_in: usize) -> Result<()> {
        let l1_ok = self.l1_mean_norms.as_ref().is_none_or(|v| v.len() == d_in);
        if self.dim() != d_in || !l1_ok {
            return Err(AwpError::Shape(format!(
                "activation norms of length {} for {d_in} input channels",
                self.dim()
            )));
        }
        Ok(())
    }

    fn l1(&self) -> Result<&[T]> {
        self.l1_mean_norms.as_deref().ok_or_else(|| {
            AwpError::InvalidConfig("l1 activation norms need the raw activations".into())
        })
    }
}

/// Per-row magnitude pruning (the unweighted Frobenius objective).
pub fn magnitude_prune<T: Scalar>(
    w: &DenseMatrix<T>,
    spec: &RowSparsitySpec,
) -> Result<(DenseMatrix<T>, SparsityMask)> {
    project_row_sparse(w, spec)
}

/// Wanda: per row keep the `k` largest `|W_ij|·‖X[j,:]‖₂`; kept weights
/// retain their original values.
pub fn wanda_prune<T: Scalar>(
    w: &DenseMatrix<T>,
    norms: &ActivationNorms<T>,
    spec: &RowSparsitySpec,
) -> Result<(DenseMatrix<T>, SparsityMask)> {
    norms.check_dim(w.cols())?;
    if spec.d_in() != w.cols() {
        return Err(AwpError::Shape("sparsity spec width differs from weight".into()));
    }
    let scores = DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| {
        w.get(i, j).abs() * norms.l2_row_norms[j]
    });
    let mask = top_k_mask(&scores, spec.keep_count())?;
    let theta = mask.apply(w)?;
    Ok((theta, mask))
}

/// Round-to-nearest onto the min-max grid of `w`.
pub fn rtn_quantize<T: Scalar>(
    w: &DenseMatrix<T>,
    qspec: &QuantSpec,
) -> Result<(DenseMatrix<T>, QuantGrid<T>)> {
    let grid = fit_quant_grid(w, qspec);
    let theta = quantize_to_grid(w, &grid)?;
    Ok((theta, grid))
}

/// Output of [`awq_lite_quantize`].
#[derive(Debug, Clone)]
pub struct AwqLiteOutput<T> {
    pub theta: DenseMatrix<T>,
    /// Grid fitted in the scaled domain `W·diag(s)`.
    pub grid: QuantGrid<T>,
    pub column_scales: Vec<T>,
    /// Integer code of every entry in the scaled domain.
    pub codes: Vec<u32>,
}

impl<T: Scalar> AwqLiteOutput<T> {
    /// Rebuilds `Θ` from the grid, the codes and the column scales.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let (rows, cols) = self.theta.shape();
        DenseMatrix::from_fn(rows, cols, |i, j| {
            self.grid.value(i, j, self.codes[i * cols + j]) / self.column_scales[j]
        })
    }
}

/// Activation-scaled RTN: scale column `j` by `s_j = (‖X[j,:]‖₁/n)^exponent`
/// (zero norms give `s_j = 1`), quantize, then undo the scaling.
pub fn awq_lite_quantize<T: Scalar>(
    w: &DenseMatrix<T>,
    norms: &ActivationNorms<T>,
    qspec: &QuantSpec,
    exponent: f64,
) -> Result<AwqLiteOutput<T>> {
    norms.check_dim(w.cols())?;
    if !(0.0..=1.0).contains(&exponent) {
        return Err(AwpError::InvalidConfig(format!(
            "scaling exponent {exponent} outside [0, 1]"
        )));
    }
    let e = T::of(exponent);
    let scales: Vec<T> = norms
        .l1()?
        .iter()
        .map(|&a| if a > T::zero() { a.powf(e) } else { T::one() })
        .collect();
    if scales.iter().any(|s| !s.is_finite() || s.is_zero()) {
        return Err(AwpError::NonFinite("activation scales".into()));
    }
    let scaled = DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| w.get(i, j) * scales[j]);
    let grid = fit_quant_grid(&scaled, qspec);
    let codes: Vec<u32> = (0..w.rows())
        .flat_map(|i| (0..w.cols()).map(move |j| (i, j)))
        .map(|(i, j)| grid.code(i, j, scaled.get(i, j)))
        .collect();
    let mut out = AwqLiteOutput {
        theta: DenseMatrix::zeros(w.rows(), w.cols()),
        grid,
        column_scales: scales,
        codes,
    };
    out.theta = out.reconstruct();
    Ok(out)
}

/// Default exponent for the AWQ-style scaling.
pub const AWQ_LITE_EXPONENT: f64 = 0.5;

/// Wanda pruning and AWQ-style quantization applied one after the other.
///
/// `PruneThenQuant` prunes with Wanda, quantizes the pruned matrix and
/// re-applies the mask; `QuantThenPrune` quantizes first and then runs Wanda
/// on the quantized matrix.
pub fn sequential_pipeline<T: Scalar>(
    w: &DenseMatrix<T>,
    norms: &ActivationNorms<T>,
    cov: &Covariance<T>,
    spec: &RowSparsitySpec,
    qspec: &QuantSpec,
    order: ProjectionOrder,
    exponent: f64,
) -> Result<CompressionResult<T>> {
    let start = Instant::now();
    let (theta, mask, out) = match order {
        ProjectionOrder::PruneThenQuant => {
            let (pruned, mask) = wanda_prune(w, norms, spec)?;
            let out = awq_lite_quantize(&pruned, norms, qspec, exponent)?;
            (mask.apply(&out.theta)?, mask, out)
        }
        ProjectionOrder::QuantThenPrune => {
            let out = awq_lite_quantize(w, norms, qspec, exponent)?;
            let (theta, mask) = wanda_prune(&out.theta, norms, spec)?;
            (theta, mask, out)
        }
    };
    let mut result = one_shot_result(w, cov, theta, Mode::Joint)?;
    result.mask = Some(mask);
    result.grid = Some(out.grid);
    result.column_scales = Some(out.column_scales);
    result.keep = Some(spec.keep_count());
    result.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Wraps a non-iterative output in a [`CompressionResult`] with a one-entry trace.
pub fn one_shot_result<T: Scalar>(
    w: &DenseMatrix<T>,
    cov: &Covariance<T>,
    theta: DenseMatrix<T>,
    mode: Mode,
) -> Result<CompressionResult<T>> {
    let cov = cov.to_normalized()?;
    let w_frob = w.frobenius()?;
    let loss = activation_loss(w, &theta, &cov)?.as_f64();
    let grad = cov.right_multiply(&w.sub(&theta)?)?.frobenius()?.as_f64();
    let wf = w_frob.as_f64();
    let normalized = if wf > 0.0 { loss / wf } else { loss };
    let grad_norm = if wf > 0.0 { grad / wf } else { grad };
    let nnz: usize = (0..theta.rows()).map(|i| theta.row_nnz(i)).sum();
    let ratio = 1.0 - nnz as f64 / (theta.rows() * theta.cols()).max(1) as f64;
    Ok(CompressionResult {
        mode,
        theta,
        mask: None,
        grid: None,
        column_scales: None,
        keep: None,
        trace: LossTrace::from_records(vec![TraceRecord {
            iter: 0,
            normalized_loss: normalized,
            grad_norm,
            ratio,
        }]),
        iterations_run: 0,
        stop_reason: StopReason::OneShot,
        eta: None,
        initial_normalized_loss: normalized,
        final_normalized_loss: normalized,
        final_output_residual: cov
            .sample_count()
            .map(|n| loss * (n as f64).sqrt()),
        wall_time_ms: 0.0,
    })
}

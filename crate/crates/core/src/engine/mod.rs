//! Activation-aware projected gradient descent.
//!
//! Each iteration takes a gradient step on `‖(W − Θ) C^{1/2}‖_F²`, written
//! with `C` only:
//!
//! ```text
//! Z = Θ + η (W − Θ) C
//! Θ = Proj(Z)
//! ```
//!
//! and projects onto the feasible set of the mode (row `k`-sparsity, the
//! quantization grid, or both). The product `(W − Θ) C` is formed once per
//! iteration and reused for the step, the loss `tr[(W − Θ) C (W − Θ)ᵀ]` and
//! the gradient norm.

mod config;
mod result;
mod trace;

use std::time::Instant;

pub use config::{CompressionConfig, GridPolicy, InitStrategy, Mode, RampSchedule, StepRule};
pub use result::{CompressionResult, StopReason};
pub use trace::{LossTrace, TraceRecord};

use crate::baselines::{magnitude_prune, rtn_quantize, wanda_prune, ActivationNorms};
use crate::error::{AwpError, Result};
use crate::projections::{
    fit_quant_grid, project_joint, project_joint_with_grid, project_row_sparse, quantize_to_grid,
    QuantGrid, RowSparsitySpec, SparsityMask,
};
use crate::scalar::Scalar;
use crate::tensor::covariance::{frobenius_inner, loss_from_trace};
use crate::tensor::{Covariance, DenseMatrix};

/// Loss limit, as a multiple of the reference loss, beyond which a run is
/// declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// One gradient step `Z = Θ + η (W − Θ) C`.
pub fn pgd_step<T: Scalar>(
    theta: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    cov: &Covariance<T>,
    eta: T,
) -> Result<DenseMatrix<T>> {
    if !(eta > T::zero()) {
        return Err(AwpError::InvalidConfig(format!("step size must be positive, got {eta}")));
    }
    let grad = cov.right_multiply(&w.sub(theta)?)?;
    theta
        .add_scaled(eta, &grad)
        .map_err(|_| AwpError::NonFinite("gradient step (step size too large?)".into()))
}

/// Step size from a rule.
pub fn step_size<T: Scalar>(cov: &Covariance<T>, rule: StepRule) -> Result<T> {
    let eta = match rule {
        StepRule::FrobScaled(c) => {
            let f = cov.frobenius()?;
            if f.is_zero() {
                return Err(AwpError::InvalidCovariance("zero covariance".into()));
            }
            T::of(c) / f
        }
        StepRule::Explicit(eta) => T::of(eta),
        StepRule::LipschitzSafe => {
            let l = cov.spectral()?.lambda_max;
            if l.is_zero() {
                return Err(AwpError::InvalidCovariance("zero covariance".into()));
            }
            T::one() / l
        }
    };
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(AwpError::InvalidConfig(format!("step size {eta} is not positive")));
    }
    Ok(eta)
}

/// Starting point `Θ(0)` for a configuration.
///
/// Wanda scores use `norms` when given and otherwise the row norms implied
/// by the covariance diagonal. A provided matrix is checked against the
/// constraint of prune and quantize modes; joint mode starts unconstrained.
pub fn initialize<T: Scalar>(
    w: &DenseMatrix<T>,
    cov: &Covariance<T>,
    cfg: &CompressionConfig,
    norms: Option<&ActivationNorms<T>>,
    provided: Option<&DenseMatrix<T>>,
) -> Result<DenseMatrix<T>> {
    let row_spec = || -> Result<RowSparsitySpec> {
        let target = cfg
            .sparsity
            .ok_or_else(|| AwpError::InvalidConfig("initializer needs a sparsity target".into()))?;
        RowSparsitySpec::from_target(target, w.cols())
    };
    let qspec = || {
        cfg.quant
            .ok_or_else(|| AwpError::InvalidConfig("initializer needs a quantization spec".into()))
    };
    match cfg.init {
        InitStrategy::OriginalWeight => Ok(w.clone()),
        InitStrategy::Magnitude => Ok(magnitude_prune(w, &row_spec()?)?.0),
        InitStrategy::Wanda => {
            let derived;
            let norms = match norms {
                Some(n) => n,
                None => {
                    derived = ActivationNorms::from_covariance(cov);
                    &derived
                }
            };
            Ok(wanda_prune(w, norms, &row_spec()?)?.0)
        }
        InitStrategy::Rtn => Ok(rtn_quantize(w, &qspec()?)?.0),
        InitStrategy::Provided => {
            let theta = provided.ok_or_else(|| {
                AwpError::InvalidConfig("provided initialization without a matrix".into())
            })?;
            if theta.shape() != w.shape() {
                return Err(AwpError::Shape(format!(
                    "initial matrix {:?} for weight {:?}",
                    theta.shape(),
                    w.shape()
                )));
            }
            match cfg.mode {
                Mode::Prune => {
                    let k = row_spec()?.keep_count();
                    if let Some(i) = (0..theta.rows()).find(|&i| theta.row_nnz(i) > k) {
                        return Err(AwpError::InvalidConfig(format!(
                            "initial row {i} has more than {k} nonzeros"
                        )));
                    }
                }
                Mode::Quantize => {
                    if !fit_quant_grid(theta, &qspec()?).contains(theta, None) {
                        return Err(AwpError::InvalidConfig(
                            "initial matrix is not on its quantization grid".into(),
                        ));
                    }
                }
                Mode::Joint => {}
            }
            Ok(theta.clone())
        }
    }
}

/// Residual products at the current iterate.
struct Residual<T> {
    /// `(W − Θ) C`.
    grad: DenseMatrix<T>,
    loss: T,
    grad_norm: T,
}

impl<T: Scalar> Residual<T> {
    fn at(w: &DenseMatrix<T>, theta: &DenseMatrix<T>, cov: &Covariance<T>, w_frob: T) -> Result<Self> {
        let d = w.sub(theta)?;
        let grad = cov.right_multiply(&d)?;
        let loss = loss_from_trace(frobenius_inner(&d, &grad), w_frob * w_frob, cov)?;
        let grad_norm = grad.frobenius()?;
        Ok(Self { grad, loss, grad_norm })
    }
}

/// Runs activation-aware PGD for one layer.
///
/// ```no_run
/// # use awp_core::prelude::*;
/// # fn demo(w: &Matrix, x: &Matrix) -> awp_core::Result<()> {
/// let cov = Covariance::from_activations(x, true)?;
/// let cfg = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
/// let out = Compressor::new(w, &cov, &cfg).run()?;
/// println!("loss {}", out.final_normalized_loss);
/// # Ok(()) }
/// ```
pub struct Compressor<'a, T> {
    w: &'a DenseMatrix<T>,
    cov: &'a Covariance<T>,
    cfg: &'a CompressionConfig,
    norms: Option<&'a ActivationNorms<T>>,
    initial: Option<&'a DenseMatrix<T>>,
}

impl<'a, T: Scalar> Compressor<'a, T> {
    pub fn new(w: &'a DenseMatrix<T>, cov: &'a Covariance<T>, cfg: &'a CompressionConfig) -> Self {
        Self {
            w,
            cov,
            cfg,
            norms: None,
            initial: None,
        }
    }

    /// Activation norms for Wanda initialization.
    pub fn with_norms(mut self, norms: &'a ActivationNorms<T>) -> Self {
        self.norms = Some(norms);
        self
    }

    /// Matrix used by [`InitStrategy::Provided`].
    pub fn with_initial(mut self, theta0: &'a DenseMatrix<T>) -> Self {
        self.initial = Some(theta0);
        self
    }

    pub fn run(self) -> Result<CompressionResult<T>> {
        self.run_observed(|_, _| {})
    }

    /// Runs and calls `observer(t, Θ(t))` for the initialization and after
    /// every iteration.
    pub fn run_observed(
        self,
        mut observer: impl FnMut(usize, &DenseMatrix<T>),
    ) -> Result<CompressionResult<T>> {
        let start = Instant::now();
        let cfg = self.cfg;
        cfg.validate()?;
        let w = self.w;
        if self.cov.dim() != w.cols() {
            return Err(AwpError::Shape(format!(
                "covariance of dim {} for weight with {} columns",
                self.cov.dim(),
                w.cols()
            )));
        }
        let cov = self.cov.to_normalized()?;
        let cov = cov.as_ref();
        let w_frob = w.frobenius()?;
        if w_frob.is_zero() {
            return Err(AwpError::InvalidConfig("weight matrix is all zeros".into()));
        }
        let eta = step_size(cov, cfg.step_rule)?;
        let row_spec = cfg
            .sparsity
            .map(|t| RowSparsitySpec::from_target(t, w.cols()))
            .transpose()?;
        let target_ratio = row_spec.map_or(0.0, |s| s.ratio_value());

        let mut theta = initialize(w, cov, cfg, self.norms, self.initial)?;
        let mut state = Residual::at(w, &theta, cov, w_frob)?;
        let normalize = |v: T| (v / w_frob).as_f64();
        let ratio_at = |t: usize| match cfg.mode {
            Mode::Prune => target_ratio,
            Mode::Quantize => 0.0,
            Mode::Joint => cfg.schedule.ratio(t, target_ratio),
        };

        let mut trace = LossTrace::default();
        trace.push(TraceRecord {
            iter: 0,
            normalized_loss: normalize(state.loss),
            grad_norm: normalize(state.grad_norm),
            ratio: ratio_at(0),
        });
        observer(0, &theta);

        // Reference for the divergence guard; the loss of Θ = 0 keeps it
        // meaningful when the run starts at Θ = W.
        let zero_loss = Residual::at(w, &DenseMatrix::zeros(w.rows(), w.cols()), cov, w_frob)?.loss;
        let limit = DIVERGENCE_FACTOR * normalize(state.loss.max(zero_loss));

        let mut mask: Option<SparsityMask> = None;
        let mut grid: Option<QuantGrid<T>> = None;
        let mut frozen: Option<QuantGrid<T>> = match (cfg.mode, cfg.grid_policy, cfg.quant) {
            (Mode::Quantize, GridPolicy::Freeze, Some(q)) => Some(fit_quant_grid(w, &q)),
            _ => None,
        };
        let mut stop_reason = StopReason::MaxIters;
        let mut iterations = 0;

        for t in 1..=cfg.iteration_budget() {
            let z = theta
                .add_scaled(eta, &state.grad)
                .map_err(|_| AwpError::NonFinite(format!("gradient step at iteration {t}")))?;
            theta = match cfg.mode {
                Mode::Prune => {
                    let spec = row_spec.expect("validated");
                    let (th, m) = project_row_sparse(&z, &spec)?;
                    mask = Some(m);
                    th
                }
                Mode::Quantize => {
                    let g = match &frozen {
                        Some(g) => g.clone(),
                        None => fit_quant_grid(&z, &cfg.quant.expect("validated")),
                    };
                    let th = quantize_to_grid(&z, &g)?;
                    grid = Some(g);
                    th
                }
                Mode::Joint => {
                    let spec = row_spec.expect("validated");
                    if cfg.schedule.is_joint_iteration(t) {
                        let qspec = cfg.quant.expect("validated");
                        let p = match &frozen {
                            Some(g) => project_joint_with_grid(&z, &spec, g, cfg.joint_order)?,
                            None => project_joint(&z, &spec, &qspec, cfg.joint_order)?,
                        };
                        if cfg.grid_policy == GridPolicy::Freeze && frozen.is_none() {
                            frozen = Some(p.grid.clone());
                        }
                        mask = Some(p.mask);
                        grid = Some(p.grid);
                        p.theta
                    } else {
                        let k = cfg.schedule.keep(t, target_ratio, w.cols(), spec.keep_count());
                        let (th, m) = project_row_sparse(&z, &RowSparsitySpec::keep(k, w.cols())?)?;
                        mask = Some(m);
                        th
                    }
                }
            };
            if cfg.mode == Mode::Joint && t == cfg.iteration_budget() {
                if let Some(m) = &mask {
                    theta = m.apply(&theta)?;
                }
            }
            state = Residual::at(w, &theta, cov, w_frob)?;
            iterations = t;
            let record = TraceRecord {
                iter: t,
                normalized_loss: normalize(state.loss),
                grad_norm: normalize(state.grad_norm),
                ratio: ratio_at(t),
            };
            trace.push(record);
            observer(t, &theta);
            if record.normalized_loss > limit {
                return Err(AwpError::Divergence {
                    iter: t,
                    loss: record.normalized_loss,
                    limit,
                });
            }
            if cfg.mode == Mode::Prune && record.grad_norm < cfg.grad_tol {
                stop_reason = StopReason::Tolerance;
                break;
            }
        }

        let initial = trace.first().map_or(0.0, |r| r.normalized_loss);
        let final_loss = trace.last().map_or(0.0, |r| r.normalized_loss);
        Ok(CompressionResult {
            mode: cfg.mode,
            theta,
            mask,
            grid,
            column_scales: None,
            keep: row_spec.map(|s| s.keep_count()),
            trace,
            iterations_run: iterations,
            stop_reason,
            eta: Some(eta.as_f64()),
            initial_normalized_loss: initial,
            final_normalized_loss: final_loss,
            final_output_residual: cov
                .sample_count()
                .map(|n| state.loss.as_f64() * (n as f64).sqrt()),
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Shorthand for `Compressor::new(w, cov, cfg).run()`.
pub fn run<T: Scalar>(
    w: &DenseMatrix<T>,
    cov: &Covariance<T>,
    cfg: &CompressionConfig,
) -> Result<CompressionResult<T>> {
    Compressor::new(w, cov, cfg).run()
}

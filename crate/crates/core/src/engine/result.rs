use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::trace::LossTrace;
use crate::projections::{QuantGrid, SparsityMask};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
    /// Non-iterative baseline.
    OneShot,
}

/// Compressed weight plus everything needed to audit it.
#[derive(Debug, Clone)]
pub struct CompressionResult<T> {
    pub mode: Mode,
    pub theta: DenseMatrix<T>,
    pub mask: Option<SparsityMask>,
    pub grid: Option<QuantGrid<T>>,
    /// Column scales when the grid lives in the scaled domain `Θ·diag(s)`.
    pub column_scales: Option<Vec<T>>,
    /// Per-row keep count of the sparsity constraint.
    pub keep: Option<usize>,
    pub trace: LossTrace,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub eta: Option<f64>,
    pub initial_normalized_loss: f64,
    pub final_normalized_loss: f64,
    /// `‖(W − Θ) X‖_F`, available when the sample count is known.
    pub final_output_residual: Option<f64>,
    pub wall_time_ms: f64,
}

impl<T: Scalar> CompressionResult<T> {
    /// Checks the feasibility invariants of the result's mode: exact keep
    /// counts, support inside the mask, and values on the grid.
    pub fn check_feasibility(&self) -> Result<(), String> {
        let needs_mask = matches!(self.mode, Mode::Prune | Mode::Joint);
        let needs_grid = matches!(self.mode, Mode::Quantize | Mode::Joint);
        if needs_mask {
            let mask = self.mask.as_ref().ok_or("missing sparsity mask")?;
            let k = self.keep.ok_or("missing keep count")?;
            if !mask.has_row_count(k) {
                return Err(format!("mask row counts {:?} differ from {k}", mask.row_counts()));
            }
            if !mask.covers_support(&self.theta) {
                return Err("nonzero entries outside the mask".into());
            }
        }
        if needs_grid {
            let grid = self.grid.as_ref().ok_or("missing quantization grid")?;
            let on_grid = match &self.column_scales {
                Some(s) => grid.contains_scaled(&self.theta, s, self.mask.as_ref()),
                None => grid.contains(&self.theta, self.mask.as_ref()),
            };
            if !on_grid {
                return Err("entries off the quantization grid".into());
            }
        }
        if self.trace.len() != self.iterations_run + 1 {
            return Err(format!(
                "trace has {} records for {} iterations",
                self.trace.len(),
                self.iterations_run
            ));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::quant::{fit_quant_grid, quantize_to_grid, QuantGrid, QuantSpec};
use super::sparsity::{project_row_sparse, RowSparsitySpec, SparsityMask};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Order in which the sparsity and quantization projections are composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionOrder {
    /// Prune, quantize the pruned matrix, then re-apply the mask.
    #[default]
    PruneThenQuant,
    /// Quantize, then hard-threshold the quantized matrix.
    QuantThenPrune,
}

/// Output of a joint projection.
#[derive(Debug, Clone)]
pub struct JointProjection<T> {
    pub theta: DenseMatrix<T>,
    pub mask: SparsityMask,
    pub grid: QuantGrid<T>,
}

/// Projects onto the intersection of the row-sparse set and the quantization
/// grid fitted to the current input.
pub fn project_joint<T: Scalar>(
    z: &DenseMatrix<T>,
    row_spec: &RowSparsitySpec,
    qspec: &QuantSpec,
    order: ProjectionOrder,
) -> Result<JointProjection<T>> {
    project_joint_inner(z, row_spec, order, |m| fit_quant_grid(m, qspec))
}

/// Same as [`project_joint`] but quantizes onto a fixed, previously fitted grid.
pub fn project_joint_with_grid<T: Scalar>(
    z: &DenseMatrix<T>,
    row_spec: &RowSparsitySpec,
    grid: &QuantGrid<T>,
    order: ProjectionOrder,
) -> Result<JointProjection<T>> {
    project_joint_inner(z, row_spec, order, |_| grid.clone())
}

fn project_joint_inner<T: Scalar>(
    z: &DenseMatrix<T>,
    row_spec: &RowSparsitySpec,
    order: ProjectionOrder,
    grid_for: impl FnOnce(&DenseMatrix<T>) -> QuantGrid<T>,
) -> Result<JointProjection<T>> {
    match order {
        ProjectionOrder::PruneThenQuant => {
            let (pruned, mask) = project_row_sparse(z, row_spec)?;
            let grid = grid_for(&pruned);
            let quantized = quantize_to_grid(&pruned, &grid)?;
            // zeros outside the support even when 0 is not a grid point
            let theta = mask.apply(&quantized)?;
            Ok(JointProjection { theta, mask, grid })
        }
        ProjectionOrder::QuantThenPrune => {
            let grid = grid_for(z);
            let quantized = quantize_to_grid(z, &grid)?;
            let (theta, mask) = project_row_sparse(&quantized, row_spec)?;
            Ok(JointProjection { theta, mask, grid })
        }
    }
}

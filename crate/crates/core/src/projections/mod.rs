//! Projections onto the feasible sets: row-wise `k`-sparsity, grouped
//! uniform quantization grids, and their composition.

pub mod joint;
pub mod quant;
pub mod sparsity;

pub use joint::{project_joint, project_joint_with_grid, JointProjection, ProjectionOrder};
pub use quant::{fit_quant_grid, quantize_to_grid, GridFile, QuantGrid, QuantSpec};
pub use sparsity::{project_row_sparse, top_k_mask, RowSparsitySpec, SparsityMask, SparsityTarget};

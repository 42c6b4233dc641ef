//! Activation-aware weight pruning and quantization by projected gradient
//! descent.
//!
//! A layer with weight `W` (`d_out × d_in`) and calibration activations `X`
//! (`d_in × n`) is compressed by minimizing `‖(W − Θ) C^{1/2}‖_F` with
//! `C = X Xᵀ / n`, subject to per-row sparsity, a grouped uniform
//! quantization grid, or both. All numerics are generic over `f32` and `f64`;
//! the aliases below fix the precision.
//!
//! ```
//! use awp_core::prelude::*;
//!
//! let w = Matrix::from_fn(4, 8, |i, j| ((i * 8 + j) as f64 * 0.7).sin());
//! let x = Matrix::from_fn(8, 64, |i, j| ((i * 64 + j) as f64 * 0.3).cos());
//! let cov = Cov::from_activations(&x, true).unwrap();
//! let cfg = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
//! let out = Compressor::new(&w, &cov, &cfg).run().unwrap();
//! assert!(out.mask.unwrap().has_row_count(4));
//! assert!(out.final_normalized_loss <= out.initial_normalized_loss);
//! ```

// `!(x > 0)` also rejects NaN; index loops read best in the dense kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod awpt;
pub mod baselines;
pub mod engine;
pub mod error;
pub mod projections;
pub mod scalar;
pub mod tensor;

pub use error::{AwpError, Result};
pub use scalar::{Dtype, Scalar};

pub type Matrix = tensor::DenseMatrix<f64>;
pub type Matrix32 = tensor::DenseMatrix<f32>;
pub type Cov = tensor::Covariance<f64>;
pub type Cov32 = tensor::Covariance<f32>;
pub type Grid = projections::QuantGrid<f64>;
pub type Outcome = engine::CompressionResult<f64>;
pub type Outcome32 = engine::CompressionResult<f32>;

pub mod prelude {
    pub use crate::baselines::{
        awq_lite_quantize, magnitude_prune, rtn_quantize, sequential_pipeline, wanda_prune,
        ActivationNorms,
    };
    pub use crate::engine::{
        CompressionConfig, CompressionResult, Compressor, GridPolicy, InitStrategy, Mode,
        RampSchedule, StepRule, StopReason,
    };
    pub use crate::projections::{
        fit_quant_grid, project_joint, project_row_sparse, quantize_to_grid, ProjectionOrder,
        QuantGrid, QuantSpec, RowSparsitySpec, SparsityMask, SparsityTarget,
    };
    pub use crate::tensor::{activation_loss, Covariance, DenseMatrix};
    pub use crate::{Cov, Cov32, Matrix, Matrix32};
    pub use crate::{AwpError, Result, Scalar};
}

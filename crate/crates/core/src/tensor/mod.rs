//! Dense matrices, activation covariance, spectral bounds and the
//! activation-aware loss.

pub mod covariance;
pub mod linalg;
pub mod matrix;
pub mod spectral;

pub use covariance::{activation_loss, Covariance};
pub use linalg::Cholesky;
pub use matrix::{dot, pairwise_sum, DenseMatrix};
pub use spectral::{spectral_extremes, SpectralOptions, SpectralSummary};

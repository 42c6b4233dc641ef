use serde::Serialize;

use crate::error::{AwpError, Result};
use crate::scalar::Scalar;
use crate::tensor::{Cholesky, Covariance, DenseMatrix};

/// Largest row width the exhaustive oracle accepts.
pub const ORACLE_MAX_DIM: usize = 16;

/// Relative ridge added to singular support blocks.
pub const ORACLE_RIDGE: f64 = 1e-12;

/// Best `k`-sparse row under the activation-aware metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution<T> {
    pub theta: Vec<T>,
    pub loss: T,
    pub support: Vec<usize>,
}

/// Exhaustive search over all `k`-subsets for
/// `min ‖(w − θ) C^{1/2}‖₂  s.t. ‖θ‖₀ ≤ k`.
///
/// For a support `S` the restricted problem has the closed form
/// `θ_S = w_S + C_SS⁻¹ C_{S,Sᶜ} w_Sᶜ`. Ties keep the first support in
/// lexicographic order.
pub fn oracle_row_sparse<T: Scalar>(
    w_row: &[T],
    cov: &Covariance<T>,
    k: usize,
) -> Result<OracleSolution<T>> {
    let d = w_row.len();
    if d > ORACLE_MAX_DIM {
        return Err(AwpError::Guard(format!(
            "oracle supports rows of width at most {ORACLE_MAX_DIM}, got {d}"
        )));
    }
    if cov.dim() != d {
        return Err(AwpError::Shape(format!(
            "row of width {d} against covariance of dim {}",
            cov.dim()
        )));
    }
    if k > d {
        return Err(AwpError::InvalidConfig(format!("keep count {k} exceeds width {d}")));
    }
    let c = cov.matrix();
    let ridge = T::of(ORACLE_RIDGE) * cov.spectral()?.lambda_max;
    let mut best: Option<OracleSolution<T>> = None;
    let mut support: Vec<usize> = (0..k).collect();
    loop {
        if let Some(theta) = restricted_solution(w_row, c, &support, ridge) {
            let resid: Vec<T> = w_row.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
            let loss = cov.quadratic_form(&resid).max(T::zero()).sqrt();
            if best.as_ref().is_none_or(|b| loss < b.loss) {
                best = Some(OracleSolution {
                    theta,
                    loss,
                    support: support.clone(),
                });
            }
        }
        if !next_combination(&mut support, d) {
            break;
        }
    }
    best.ok_or_else(|| AwpError::Singular("every support block is singular".into()))
}

fn restricted_solution<T: Scalar>(
    w: &[T],
    c: &DenseMatrix<T>,
    support: &[usize],
    ridge: T,
) -> Option<Vec<T>> {
    let d = w.len();
    let mut theta = vec![T::zero(); d];
    if support.is_empty() {
        return Some(theta);
    }
    let mut inside = vec![false; d];
    support.iter().for_each(|&j| inside[j] = true);
    let block = DenseMatrix::from_fn(support.len(), support.len(), |a, b| {
        c.get(support[a], support[b])
    });
    // C_{S,Sᶜ} w_Sᶜ
    let rhs: Vec<T> = support
        .iter()
        .map(|&s| {
            (0..d)
                .filter(|&j| !inside[j])
                .fold(T::zero(), |acc, j| acc + c.get(s, j) * w[j])
        })
        .collect();
    let chol = Cholesky::factor(&block).or_else(|_| {
        let ridged = DenseMatrix::from_fn(block.rows(), block.cols(), |a, b| {
            block.get(a, b) + if a == b { ridge } else { T::zero() }
        });
        Cholesky::factor(&ridged)
    });
    let delta = chol.ok()?.solve(&rhs);
    for (&s, dv) in support.iter().zip(delta) {
        theta[s] = w[s] + dv;
    }
    Some(theta)
}

/// Advances `idx` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Activation-aware loss of a single row, `‖(w − θ) C^{1/2}‖₂`.
pub fn row_loss<T: Scalar>(w_row: &[T], theta_row: &[T], cov: &Covariance<T>) -> T {
    let resid: Vec<T> = w_row.iter().zip(theta_row).map(|(&a, &b)| a - b).collect();
    cov.quadratic_form(&resid).max(T::zero()).sqrt()
}

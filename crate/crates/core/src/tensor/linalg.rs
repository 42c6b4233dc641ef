//! Small dense factorizations used by the oracle and the trial generator.

use super::matrix::DenseMatrix;
use crate::error::{AwpError, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix. Fails with
    /// [`AwpError::Singular`] when a pivot is not strictly positive.
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(AwpError::Shape("Cholesky needs a square matrix".into()));
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for p in 0..j {
                d = d - l.get(j, p) * l.get(j, p);
            }
            if !(d > T::zero()) {
                return Err(AwpError::Singular(format!("non-positive pivot at {j}")));
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for p in 0..j {
                    s = s - l.get(i, p) * l.get(j, p);
                }
                l.set(i, j, s / d);
            }
        }
        Ok(Self { l })
    }

    pub fn lower(&self) -> &DenseMatrix<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let y = self.solve_lower(b);
        self.solve_upper(&y)
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s = s - self.l.get(i, p) * y[p];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s = s - self.l.get(p, i) * x[p];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Solves the row equation `x L = g`, i.e. `Lᵀ xᵀ = gᵀ`.
    pub fn solve_row_times_lower(&self, g: &[T]) -> Vec<T> {
        self.solve_upper(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_and_solves_spd() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 3.0, 0.5],
            vec![0.4, 0.5, 2.0],
        ])
        .unwrap();
        let ch = Cholesky::factor(&a).unwrap();
        let l = ch.lower();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&a).unwrap() < 1e-14);

        let b = [1.0, -2.0, 0.5];
        let x = ch.solve(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a.get(i, j) * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }

        let g = [0.3, 0.1, -0.7];
        let e = ch.solve_row_times_lower(&g);
        for j in 0..3 {
            let r: f64 = (0..3).map(|i| e[i] * l.get(i, j)).sum();
            assert!((r - g[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&a), Err(AwpError::Singular(_))));
    }
}

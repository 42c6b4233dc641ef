use rayon::prelude::*;

use crate::error::{AwpError, Result};
use crate::scalar::{Dtype, Scalar};

/// Row-major dense matrix.
///
/// All entries are finite. Constructors that accept external data check
/// this; arithmetic that could overflow reports [`AwpError::NonFinite`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Rows below this many output entries are multiplied on the calling thread.
const PAR_MIN_ENTRIES: usize = 4096;

impl<T: Scalar> DenseMatrix<T> {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AwpError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AwpError::NonFiniteInput(format!(
                "entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AwpError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec_unchecked(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on zero width
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts the element type, failing if a value does not fit.
    pub fn cast<U: Scalar>(&self) -> Result<DenseMatrix<U>> {
        let data = self
            .data
            .iter()
            .map(|&v| U::of(v.as_f64()))
            .collect::<Vec<_>>();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AwpError::NonFinite("precision conversion".into()));
        }
        Ok(DenseMatrix::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(AwpError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "subtraction")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        finite_or(Self::from_vec_unchecked(self.rows, self.cols, data), "subtraction")
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "scaled addition")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + alpha * b)
            .collect();
        finite_or(Self::from_vec_unchecked(self.rows, self.cols, data), "scaled addition")
    }

    pub fn scale(&self, alpha: T) -> Result<Self> {
        finite_or(self.map(|v| v * alpha), "scaling")
    }

    /// Matrix product `self * rhs`.
    ///
    /// Rows of the output are independent and may be computed on different
    /// threads; each entry accumulates over the inner index in ascending
    /// order, so results do not depend on the thread count.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(AwpError::Shape(format!(
                "product of {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        if rhs.cols == 0 || self.rows == 0 {
            return Ok(out);
        }
        let work = |(i, out_row): (usize, &mut [T])| {
            row_times_matrix(self.row(i), rhs, out_row);
        };
        if self.rows * rhs.cols * self.cols >= PAR_MIN_ENTRIES {
            out.data.par_chunks_mut(rhs.cols).enumerate().for_each(work);
        } else {
            out.data.chunks_mut(rhs.cols).enumerate().for_each(work);
        }
        finite_or(out, "matrix product")
    }

    /// `self * selfᵀ`, computed on the upper triangle and mirrored so the
    /// result is exactly symmetric.
    pub fn gram(&self) -> Result<Self> {
        let n = self.rows;
        let upper: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| dot(self.row(i), self.row(j))).collect())
            .collect();
        let mut out = Self::zeros(n, n);
        for (i, vals) in upper.into_iter().enumerate() {
            for (off, v) in vals.into_iter().enumerate() {
                let j = i + off;
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        finite_or(out, "Gram product")
    }

    /// Frobenius norm with a fixed pairwise reduction over row-major order.
    pub fn frobenius(&self) -> Result<T> {
        let sq: Vec<T> = self.data.iter().map(|&v| v * v).collect();
        let norm = pairwise_sum(&sq).sqrt();
        if norm.is_finite() {
            Ok(norm)
        } else {
            Err(AwpError::NonFinite("Frobenius norm".into()))
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "comparison")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Number of nonzero entries in row `i`.
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row(i).iter().filter(|v| !v.is_zero()).count()
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

fn finite_or<T: Scalar>(m: DenseMatrix<T>, what: &str) -> Result<DenseMatrix<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(AwpError::NonFinite(what.into()))
    }
}

/// `out = row * rhs`, accumulating over the inner index in ascending order.
#[inline]
pub(crate) fn row_times_matrix<T: Scalar>(row: &[T], rhs: &DenseMatrix<T>, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for (l, &a) in row.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(rhs.row(l)) {
            *o = *o + a * b;
        }
    }
}

/// Sequential dot product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Pairwise (cascade) summation with a fixed split, so the result depends
/// only on the input order.
pub fn pairwise_sum<T: Scalar>(v: &[T]) -> T {
    const BLOCK: usize = 16;
    if v.len() <= BLOCK {
        v.iter().fold(T::zero(), |acc, &x| acc + x)
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

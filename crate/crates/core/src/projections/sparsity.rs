use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AwpError, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Per-row sparsity target before it is bound to a row width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityTarget {
    /// Keep exactly this many entries per row.
    Keep(usize),
    /// Zero out this fraction of each row; `k = round((1 − p)·d_in)`.
    Ratio(f64),
}

/// Semi-structured constraint: every row keeps exactly `k` of `d_in` entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSparsitySpec {
    target: SparsityTarget,
    d_in: usize,
    keep: usize,
}

impl RowSparsitySpec {
    pub fn keep(k: usize, d_in: usize) -> Result<Self> {
        if k > d_in {
            return Err(AwpError::InvalidConfig(format!(
                "keep count {k} exceeds row width {d_in}"
            )));
        }
        Ok(Self {
            target: SparsityTarget::Keep(k),
            d_in,
            keep: k,
        })
    }

    pub fn ratio(p: f64, d_in: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(AwpError::InvalidConfig(format!(
                "pruning ratio {p} outside [0, 1]"
            )));
        }
        let keep = ((1.0 - p) * d_in as f64).round() as usize;
        Ok(Self {
            target: SparsityTarget::Ratio(p),
            d_in,
            keep: keep.min(d_in),
        })
    }

    pub fn from_target(target: SparsityTarget, d_in: usize) -> Result<Self> {
        match target {
            SparsityTarget::Keep(k) => Self::keep(k, d_in),
            SparsityTarget::Ratio(p) => Self::ratio(p, d_in),
        }
    }

    pub fn keep_count(&self) -> usize {
        self.keep
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn target(&self) -> SparsityTarget {
        self.target
    }

    /// Pruning ratio `p` (the requested one, or `1 − k/d_in` for a keep count).
    pub fn ratio_value(&self) -> f64 {
        match self.target {
            SparsityTarget::Ratio(p) => p,
            SparsityTarget::Keep(k) if self.d_in > 0 => 1.0 - k as f64 / self.d_in as f64,
            SparsityTarget::Keep(_) => 0.0,
        }
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.d_in {
            return Err(AwpError::Shape(format!(
                "sparsity spec for width {} applied to width {cols}",
                self.d_in
            )));
        }
        Ok(())
    }
}

/// Boolean keep-mask with the same shape as the weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl SparsityMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(AwpError::Shape(format!(
                "mask {rows}x{cols} needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.bits[i * self.cols..(i + 1) * self.cols]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.rows).map(|i| self.row_count(i)).collect()
    }

    /// True when every row keeps exactly `k` entries.
    pub fn has_row_count(&self, k: usize) -> bool {
        (0..self.rows).all(|i| self.row_count(i) == k)
    }

    /// Zeroes every entry outside the mask.
    pub fn apply<T: Scalar>(&self, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if m.shape() != (self.rows, self.cols) {
            return Err(AwpError::Shape(format!(
                "mask {:?} applied to {:?}",
                (self.rows, self.cols),
                m.shape()
            )));
        }
        let data = m
            .as_slice()
            .iter()
            .zip(&self.bits)
            .map(|(&v, &keep)| if keep { v } else { T::zero() })
            .collect();
        Ok(DenseMatrix::from_vec_unchecked(self.rows, self.cols, data))
    }

    /// True when every nonzero of `m` lies inside the mask.
    pub fn covers_support<T: Scalar>(&self, m: &DenseMatrix<T>) -> bool {
        m.shape() == (self.rows, self.cols)
            && m
                .as_slice()
                .iter()
                .zip(&self.bits)
                .all(|(v, &keep)| keep || v.is_zero())
    }

    /// Row-major packed bits, least significant bit first within each byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            out[i / 8] |= 1 << (i % 8);
        }
        out
    }

    pub fn from_packed(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let n = rows * cols;
        if bytes.len() != n.div_ceil(8) {
            return Err(AwpError::Format(format!(
                "mask payload of {} bytes for {n} bits",
                bytes.len()
            )));
        }
        let bits = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self { rows, cols, bits })
    }
}

/// Indices of the `k` largest keys in `keys`; ties go to the lower index.
pub(crate) fn top_k_indices<T: Scalar>(keys: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        let cmp = |&a: &usize, &b: &usize| -> Ordering {
            keys[b]
                .partial_cmp(&keys[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        };
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx
}

/// Keep-mask selecting, in each row, the `k` largest scores.
pub fn top_k_mask<T: Scalar>(scores: &DenseMatrix<T>, k: usize) -> Result<SparsityMask> {
    let (rows, cols) = scores.shape();
    if k > cols {
        return Err(AwpError::InvalidConfig(format!(
            "keep count {k} exceeds row width {cols}"
        )));
    }
    let row_bits: Vec<Vec<bool>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let mut bits = vec![false; cols];
            if k == cols {
                bits.fill(true);
            } else {
                for j in top_k_indices(scores.row(i), k) {
                    bits[j] = true;
                }
            }
            bits
        })
        .collect();
    SparsityMask::new(rows, cols, row_bits.concat())
}

/// Hard thresholding per row: keeps the `k` largest-magnitude entries of
/// each row of `z` unchanged and zeroes the rest.
pub fn project_row_sparse<T: Scalar>(
    z: &DenseMatrix<T>,
    spec: &RowSparsitySpec,
) -> Result<(DenseMatrix<T>, SparsityMask)> {
    spec.check_width(z.cols())?;
    let mask = top_k_mask(&z.map(|v| v.abs()), spec.keep_count())?;
    let theta = mask.apply(z)?;
    Ok((theta, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn keeps_largest_magnitudes() {
        let spec = RowSparsitySpec::keep(2, 3).unwrap();
        let (theta, mask) = project_row_sparse(&row(&[3.0, -1.0, 2.0]), &spec).unwrap();
        assert_eq!(theta, row(&[3.0, 0.0, 2.0]));
        assert_eq!(mask.as_slice(), &[true, false, true]);
    }

    #[test]
    fn vacuous_and_empty_support() {
        let z = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -3.0]]).unwrap();
        let (full, m) = project_row_sparse(&z, &RowSparsitySpec::keep(3, 3).unwrap()).unwrap();
        assert_eq!(full, z);
        assert!(m.has_row_count(3));
        let (none, m) = project_row_sparse(&z, &RowSparsitySpec::keep(0, 3).unwrap()).unwrap();
        assert_eq!(none, DenseMatrix::zeros(2, 3));
        assert!(m.has_row_count(0));
    }

    #[test]
    fn ties_go_to_lower_column() {
        let spec = RowSparsitySpec::keep(2, 4).unwrap();
        let (theta, _) = project_row_sparse(&row(&[1.0, -2.0, 2.0, 2.0]), &spec).unwrap();
        assert_eq!(theta, row(&[0.0, -2.0, 2.0, 0.0]));
    }

    #[test]
    fn keep_over_width_rejected() {
        assert!(RowSparsitySpec::keep(4, 3).is_err());
        assert!(RowSparsitySpec::ratio(1.5, 3).is_err());
        let spec = RowSparsitySpec::keep(1, 3).unwrap();
        assert!(project_row_sparse(&row(&[1.0, 2.0]), &spec).is_err());
    }

    #[test]
    fn ratio_rounds() {
        assert_eq!(RowSparsitySpec::ratio(0.5, 128).unwrap().keep_count(), 64);
        assert_eq!(RowSparsitySpec::ratio(0.75, 10).unwrap().keep_count(), 3);
        assert_eq!(RowSparsitySpec::ratio(0.0, 7).unwrap().keep_count(), 7);
        assert_eq!(RowSparsitySpec::ratio(1.0, 7).unwrap().keep_count(), 0);
    }

    #[test]
    fn packed_bits_layout() {
        let mask = SparsityMask::new(1, 10, (0..10).map(|i| i % 3 == 0).collect()).unwrap();
        let packed = mask.to_packed();
        assert_eq!(packed, vec![0b0100_1001, 0b0000_0010]);
        assert_eq!(SparsityMask::from_packed(1, 10, &packed).unwrap(), mask);
        assert!(SparsityMask::from_packed(1, 10, &packed[..1]).is_err());
    }
}

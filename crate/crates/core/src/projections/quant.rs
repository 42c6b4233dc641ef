use serde::{Deserialize, Serialize};

use super::sparsity::SparsityMask;
use crate::error::{AwpError, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Uniform asymmetric (min-max) grouped quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    bits: u32,
    group_size: usize,
}

impl QuantSpec {
    pub fn new(bits: u32, group_size: usize) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(AwpError::InvalidConfig(format!(
                "bits must be in 2..=16, got {bits}"
            )));
        }
        if group_size == 0 {
            return Err(AwpError::InvalidConfig("group size must be positive".into()));
        }
        Ok(Self { bits, group_size })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn max_code(&self) -> u32 {
        self.levels() - 1
    }
}

/// Scale and zero point for every `(row, group)`.
///
/// Representable values of a group are `scale·(q − zero_point)` for
/// `q ∈ {0, …, 2^bits − 1}`. A constant group has `scale = 0` and stores
/// its value in `offsets`, which is then its only representable value.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid<T> {
    spec: QuantSpec,
    rows: usize,
    cols: usize,
    groups_per_row: usize,
    scales: Vec<T>,
    zero_points: Vec<u32>,
    offsets: Vec<T>,
}

/// JSON form of a [`QuantGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub bits: u32,
    pub group_size: usize,
    pub cols: usize,
    pub scales: Vec<Vec<f64>>,
    pub zero_points: Vec<Vec<u32>>,
    /// Reconstruction value of constant (`scale = 0`) groups; 0 elsewhere.
    pub offsets: Vec<Vec<f64>>,
}

impl<T: Scalar> QuantGrid<T> {
    /// Fits a min-max grid to every group of every row of `z`.
    pub fn fit(z: &DenseMatrix<T>, spec: &QuantSpec) -> Self {
        let (rows, cols) = z.shape();
        let groups_per_row = cols.div_ceil(spec.group_size);
        let max_code = T::of(spec.max_code() as f64);
        let mut scales = Vec::with_capacity(rows * groups_per_row);
        let mut zero_points = Vec::with_capacity(rows * groups_per_row);
        let mut offsets = Vec::with_capacity(rows * groups_per_row);
        for i in 0..rows {
            for group in z.row(i).chunks(spec.group_size) {
                let (lo, hi) = group
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                let scale = (hi - lo) / max_code;
                if scale.is_zero() {
                    scales.push(T::zero());
                    zero_points.push(0);
                    offsets.push(lo);
                } else {
                    let zp = (-lo / scale).round().max(T::zero()).min(max_code);
                    scales.push(scale);
                    zero_points.push(zp.as_f64() as u32);
                    offsets.push(T::zero());
                }
            }
        }
        Self {
            spec: *spec,
            rows,
            cols,
            groups_per_row,
            scales,
            zero_points,
            offsets,
        }
    }

    pub fn spec(&self) -> &QuantSpec {
        &self.spec
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn groups_per_row(&self) -> usize {
        self.groups_per_row
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.groups_per_row + j / self.spec.group_size
    }

    /// `(scale, zero_point)` for the group containing column `j` of row `i`.
    pub fn params(&self, i: usize, j: usize) -> (T, u32) {
        let s = self.slot(i, j);
        (self.scales[s], self.zero_points[s])
    }

    /// Integer code of the grid point nearest to `z` for entry `(i, j)`:
    /// round half away from zero, then clamp to `[0, 2^bits − 1]`.
    pub fn code(&self, i: usize, j: usize, z: T) -> u32 {
        let s = self.slot(i, j);
        let scale = self.scales[s];
        if scale.is_zero() {
            return 0;
        }
        let max_code = T::of(self.spec.max_code() as f64);
        let zp = T::of(self.zero_points[s] as f64);
        let q = ((z / scale).round() + zp).max(T::zero()).min(max_code);
        q.as_f64() as u32
    }

    /// Value represented by `code` at entry `(i, j)`.
    pub fn value(&self, i: usize, j: usize, code: u32) -> T {
        let s = self.slot(i, j);
        let scale = self.scales[s];
        if scale.is_zero() {
            return self.offsets[s];
        }
        scale * T::of(code as f64 - self.zero_points[s] as f64)
    }

    /// Every representable value of the group containing `(i, j)`.
    pub fn levels(&self, i: usize, j: usize) -> Vec<T> {
        let s = self.slot(i, j);
        if self.scales[s].is_zero() {
            return vec![self.offsets[s]];
        }
        (0..self.spec.levels()).map(|q| self.value(i, j, q)).collect()
    }

    pub fn quantize_entry(&self, i: usize, j: usize, z: T) -> T {
        self.value(i, j, self.code(i, j, z))
    }

    /// True when `v` is exactly a representable value at `(i, j)`.
    pub fn is_representable(&self, i: usize, j: usize, v: T) -> bool {
        self.quantize_entry(i, j, v) == v
    }

    /// True when every entry of `theta` is representable, except entries
    /// outside `mask`, which must be exactly zero.
    pub fn contains(&self, theta: &DenseMatrix<T>, mask: Option<&SparsityMask>) -> bool {
        if theta.shape() != (self.rows, self.cols) {
            return false;
        }
        (0..self.rows).all(|i| {
            theta.row(i).iter().enumerate().all(|(j, &v)| match mask {
                Some(m) if !m.get(i, j) => v.is_zero(),
                _ => self.is_representable(i, j, v),
            })
        })
    }

    /// Like [`contains`](Self::contains) for a grid fitted to `Θ·diag(s)`:
    /// each kept entry must equal some representable value divided by `s_j`.
    pub fn contains_scaled(
        &self,
        theta: &DenseMatrix<T>,
        col_scales: &[T],
        mask: Option<&SparsityMask>,
    ) -> bool {
        if theta.shape() != (self.rows, self.cols) || col_scales.len() != self.cols {
            return false;
        }
        (0..self.rows).all(|i| {
            theta.row(i).iter().enumerate().all(|(j, &v)| match mask {
                Some(m) if !m.get(i, j) => v.is_zero(),
                _ => {
                    let s = col_scales[j];
                    self.value(i, j, self.code(i, j, v * s)) / s == v
                }
            })
        })
    }

    pub fn to_file(&self) -> GridFile {
        let split = |v: &[T]| -> Vec<Vec<f64>> {
            v.chunks(self.groups_per_row.max(1))
                .map(|c| c.iter().map(|x| x.as_f64()).collect())
                .collect()
        };
        GridFile {
            bits: self.spec.bits,
            group_size: self.spec.group_size,
            cols: self.cols,
            scales: split(&self.scales),
            zero_points: self
                .zero_points
                .chunks(self.groups_per_row.max(1))
                .map(<[u32]>::to_vec)
                .collect(),
            offsets: split(&self.offsets),
        }
    }

    pub fn from_file(f: &GridFile) -> Result<Self> {
        let spec = QuantSpec::new(f.bits, f.group_size)?;
        let rows = f.scales.len();
        let groups_per_row = f.cols.div_ceil(f.group_size);
        let ok_shape = |lens: Vec<usize>| lens.len() == rows && lens.iter().all(|&l| l == groups_per_row);
        if !ok_shape(f.scales.iter().map(Vec::len).collect())
            || !ok_shape(f.zero_points.iter().map(Vec::len).collect())
            || !ok_shape(f.offsets.iter().map(Vec::len).collect())
        {
            return Err(AwpError::Format("grid arrays have inconsistent shapes".into()));
        }
        let scales: Vec<T> = f.scales.concat().into_iter().map(T::of).collect();
        let offsets: Vec<T> = f.offsets.concat().into_iter().map(T::of).collect();
        let zero_points = f.zero_points.concat();
        if scales.iter().chain(&offsets).any(|v| !v.is_finite())
            || scales.iter().any(|&s| s < T::zero())
            || zero_points.iter().any(|&z| z > spec.max_code())
        {
            return Err(AwpError::Format("grid values out of range".into()));
        }
        Ok(Self {
            spec,
            rows,
            cols: f.cols,
            groups_per_row,
            scales,
            zero_points,
            offsets,
        })
    }
}

/// Fits the min-max grid for `z`.
pub fn fit_quant_grid<T: Scalar>(z: &DenseMatrix<T>, spec: &QuantSpec) -> QuantGrid<T> {
    QuantGrid::fit(z, spec)
}

/// Maps every entry of `z` to its nearest representable value on `grid`.
pub fn quantize_to_grid<T: Scalar>(z: &DenseMatrix<T>, grid: &QuantGrid<T>) -> Result<DenseMatrix<T>> {
    if z.shape() != grid.shape() {
        return Err(AwpError::Shape(format!(
            "grid for {:?} applied to {:?}",
            grid.shape(),
            z.shape()
        )));
    }
    Ok(DenseMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        grid.quantize_entry(i, j, z.get(i, j))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn min_max_grid_by_hand() {
        let spec = QuantSpec::new(2, 4).unwrap();
        let z = row(&[0.0, 1.0, 2.0, 3.0]);
        let g = fit_quant_grid(&z, &spec);
        assert_eq!(g.params(0, 0), (1.0, 0));
        assert_eq!(quantize_to_grid(&z, &g).unwrap(), z);
        assert_eq!(g.quantize_entry(0, 0, 1.4), 1.0);
        assert_eq!(g.quantize_entry(0, 0, 1.5), 2.0);
    }

    #[test]
    fn symmetric_range() {
        let a = 0.9;
        let g = fit_quant_grid(&row(&[-a, 0.2, a]), &QuantSpec::new(4, 3).unwrap());
        let (scale, zp) = g.params(0, 0);
        assert!((scale - 2.0 * a / 15.0).abs() < 1e-15);
        assert_eq!(zp as f64, (a / scale).round());
    }

    #[test]
    fn constant_group_is_exact() {
        let z = row(&[5.0, 5.0, 5.0]);
        let g = fit_quant_grid(&z, &QuantSpec::new(4, 3).unwrap());
        assert_eq!(g.params(0, 0), (0.0, 0));
        assert_eq!(quantize_to_grid(&z, &g).unwrap(), z);
    }

    #[test]
    fn groups_partition_rows_with_short_tail() {
        let z = row(&[0.0, 1.0, 2.0, 3.0, 10.0, 20.0]);
        let g = fit_quant_grid(&z, &QuantSpec::new(2, 4).unwrap());
        assert_eq!(g.groups_per_row(), 2);
        assert_eq!(g.params(0, 3).0, 1.0);
        assert_eq!(g.params(0, 4).0, 10.0 / 3.0);
    }

    #[test]
    fn idempotent_and_on_grid() {
        let z = DenseMatrix::from_fn(3, 10, |i, j| ((i * 10 + j) as f64 * 0.71).sin());
        let g = fit_quant_grid(&z, &QuantSpec::new(3, 4).unwrap());
        let q = quantize_to_grid(&z, &g).unwrap();
        assert!(g.contains(&q, None));
        assert!(quantize_to_grid(&q, &g).unwrap().bit_eq(&q));
    }

    #[test]
    fn invalid_specs() {
        assert!(QuantSpec::new(1, 8).is_err());
        assert!(QuantSpec::new(4, 0).is_err());
        let g = fit_quant_grid(&row(&[1.0, 2.0]), &QuantSpec::new(2, 2).unwrap());
        assert!(quantize_to_grid(&row(&[1.0, 2.0, 3.0]), &g).is_err());
    }

    #[test]
    fn file_round_trip() {
        let z = DenseMatrix::from_fn(2, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let g = fit_quant_grid(&z, &QuantSpec::new(4, 2).unwrap());
        let json = serde_json::to_string(&g.to_file()).unwrap();
        let back: QuantGrid<f64> =
            QuantGrid::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}

//! Minimal row-major dense and compressed-row sparse matrices.

use crate::error::{Error, Result};
use crate::par;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Exact (bitwise) symmetry.
    pub fn is_exactly_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let d = &self.data;
        let mut ok = true;
        strictly_lower_tiles(n, |i, j| ok &= d[i * n + j] == d[j * n + i]);
        ok
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let cols = other.cols;
        par::for_each_row(&mut out.data, cols.max(1), |i, row| {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a != 0.0 {
                    axpy(row, a, other.row(k));
                }
            }
        });
        Ok(out)
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

const TILE: usize = 64;

/// Visit every `(i, j)` with `j < i` in cache-friendly square tiles.
pub(crate) fn strictly_lower_tiles(n: usize, mut f: impl FnMut(usize, usize)) {
    for bi in (0..n).step_by(TILE) {
        for bj in (0..=bi).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj..(bj + TILE).min(i) {
                    f(i, j);
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Compressed sparse row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(col, value)` lists. Entries are sorted by column;
    /// duplicate columns within a row are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= n_cols {
                    return Err(Error::Shape(format!(
                        "row {i} references column {c} of a {n_cols}-column matrix"
                    )));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let rows = (0..m.rows())
            .map(|i| {
                m.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(m.cols(), rows).expect("dense columns are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(pos) => self.values[a + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            out[c] += v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        Self::from_rows(self.n_rows, rows).expect("transpose indices are in range")
    }

    /// Entrywise `(self + other) * scale` on the union pattern.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Shape("sparse operands differ in shape".into()));
        }
        let rows = (0..self.n_rows)
            .map(|i| {
                self.row(i)
                    .chain(other.row(i))
                    .map(|(j, v)| (j, v * scale))
                    .collect()
            })
            .collect();
        Self::from_rows(self.n_cols, rows)
    }

    /// `sum_v weights[v] * mats[v]` on the union pattern.
    pub fn linear_combination(mats: &[&Self], weights: &[f64]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::Shape("empty linear combination".into()))?;
        if mats.len() != weights.len() {
            return Err(Error::Shape("weights do not match matrices".into()));
        }
        let (r, c) = (first.n_rows, first.n_cols);
        if mats.iter().any(|m| m.n_rows != r || m.n_cols != c) {
            return Err(Error::Shape("sparse operands differ in shape".into()));
        }
        let rows = (0..r)
            .map(|i| {
                mats.iter()
                    .zip(weights)
                    .flat_map(|(m, &w)| m.row(i).map(move |(j, v)| (j, w * v)))
                    .collect()
            })
            .collect();
        Self::from_rows(c, rows)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_exactly_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `self * x` for dense `x`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, x.rows(), "sparse-dense product shape mismatch");
        let mut out = DenseMatrix::zeros(self.n_rows, x.cols());
        let width = x.cols().max(1);
        // Column panels keep the touched slice of `x` cache resident.
        const ROWS: usize = 32;
        const PANEL: usize = 256;
        par::for_each_row(out.as_mut_slice(), ROWS * width, |c, chunk| {
            for lo in (0..width).step_by(PANEL) {
                let hi = (lo + PANEL).min(width);
                for (r, row) in chunk.chunks_mut(width).enumerate() {
                    for (k, a) in self.row(c * ROWS + r) {
                        axpy(&mut row[lo..hi], a, &x.row(k)[lo..hi]);
                    }
                }
            }
        });
        out
    }

    /// `x * self^T` for dense `x`: entry (i, j) is `<x_i, self_j>`.
    pub fn dense_mul_transpose(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, x.cols(), "dense-sparse product shape mismatch");
        let mut out = DenseMatrix::zeros(x.rows(), self.n_rows);
        let width = self.n_rows.max(1);
        par::for_each_row(out.as_mut_slice(), width, |i, row| {
            let xi = x.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = self.row(j).map(|(k, a)| a * xi[k]).sum();
            }
        });
        out
    }

    /// Largest-magnitude eigenvalue estimate of a symmetric matrix via power
    /// iteration on `self^2` (so negative eigenvalues are captured too).
    pub fn spectral_radius_estimate(&self, tol: f64, max_iter: usize) -> f64 {
        let n = self.n_rows;
        if n == 0 {
            return 0.0;
        }
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract())
            .collect();
        let norm = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let mut estimate = 0.0;
        for _ in 0..max_iter {
            let y = self.mul_vec(&self.mul_vec(&x));
            let ny = dot(&y, &y).sqrt();
            if ny == 0.0 {
                return 0.0;
            }
            let next = ny.sqrt();
            x = y.into_iter().map(|v| v / ny).collect();
            if (next - estimate).abs() <= tol * next.max(1.0) {
                return next;
            }
            estimate = next;
        }
        estimate
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }
}

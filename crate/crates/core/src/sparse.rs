//! Compressed sparse row matrices and triplet assembly.

use crate::error::{FemError, Result};

/// Triplet accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, ..Default::default() }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    /// Adds `block` (row-major, `rows.len() x cols.len()`) at the given indices.
    pub fn push_block(&mut self, rows: &[usize], cols: &[usize], block: &[f64], scale: f64) {
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                let v = block[i * cols.len() + j];
                if v != 0.0 {
                    self.push(*r, *c, scale * v);
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Converts to CSR. Summation order follows insertion order, so the
    /// result is deterministic for a deterministic insertion sequence.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rows {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for k in 0..self.nnz() {
            let r = self.rows[k];
            cols[next[r]] = self.cols[k];
            vals[next[r]] = self.vals[k];
            next[r] += 1;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.nnz());
        let mut data = Vec::with_capacity(self.nnz());
        let mut order: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            let (s, e) = (count[r], count[r + 1]);
            order.clear();
            order.extend(s..e);
            // Stable sort keeps insertion order among duplicates.
            order.sort_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    *data.last_mut().unwrap() += vals[k];
                } else {
                    indices.push(cols[k]);
                    data.push(vals[k]);
                    last = cols[k];
                }
            }
            indptr[r + 1] = indices.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.data[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let (idx, val) = self.row(r);
            *yr = idx.iter().zip(val).map(|(c, v)| v * x[*c]).sum();
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            count[c + 1] += 1;
        }
        for i in 0..self.ncols {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (c, v) in idx.iter().zip(val) {
                indices[next[*c]] = r;
                data[next[*c]] = *v;
                next[*c] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, indptr: count, indices, data }
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, b.nrows);
        let mut acc = vec![0.0; b.ncols];
        let mut mark = vec![usize::MAX; b.ncols];
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            let start = indices.len();
            let (ia, va) = self.row(r);
            for (k, a) in ia.iter().zip(va) {
                let (ib, vb) = b.row(*k);
                for (c, v) in ib.iter().zip(vb) {
                    if mark[*c] != r {
                        mark[*c] = r;
                        acc[*c] = 0.0;
                        indices.push(*c);
                    }
                    acc[*c] += a * v;
                }
            }
            indices[start..].sort_unstable();
            data.extend(indices[start..].iter().map(|c| acc[*c]));
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: b.ncols, indptr, indices, data }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|r| {
                let (idx, val) = self.row(r);
                x[r] * idx.iter().zip(val).map(|(c, v)| v * y[*c]).sum::<f64>()
            })
            .sum()
    }

    pub fn to_coo(&self) -> CooMatrix {
        let mut coo = CooMatrix::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (c, v) in idx.iter().zip(val) {
                coo.push(r, *c, *v);
            }
        }
        coo
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Submatrix with the given rows and columns (`cols` maps old column to new, or `usize::MAX`).
    pub fn extract(&self, rows: &[usize], col_map: &[usize], ncols: usize) -> CsrMatrix {
        let mut indptr = vec![0usize; rows.len() + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            let (idx, val) = self.row(r);
            let mut entries: Vec<(usize, f64)> = idx
                .iter()
                .zip(val)
                .filter(|(c, _)| col_map[**c] != usize::MAX)
                .map(|(c, v)| (col_map[*c], *v))
                .collect();
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                indices.push(c);
                data.push(v);
            }
            indptr[i + 1] = indices.len();
        }
        CsrMatrix { nrows: rows.len(), ncols, indptr, indices, data }
    }

    pub fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(FemError::DimensionMismatch(format!(
                "matrix is {} x {}, expected square",
                self.nrows, self.ncols
            )));
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_dense() {
        let mut a = CooMatrix::new(2, 3);
        a.push(0, 0, 1.0);
        a.push(0, 2, 2.0);
        a.push(1, 1, 3.0);
        let mut b = CooMatrix::new(3, 2);
        b.push(0, 1, 4.0);
        b.push(1, 0, 5.0);
        b.push(2, 1, 6.0);
        let c = a.to_csr().matmul(&b.to_csr());
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(0, 1), 16.0);
        assert_eq!(c.get(1, 0), 15.0);
        assert_eq!(c.get(1, 1), 0.0);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut coo = CooMatrix::new(2, 3);
        coo.push(0, 2, 1.0);
        coo.push(0, 0, 2.0);
        coo.push(0, 2, 3.0);
        coo.push(1, 1, -1.0);
        let a = coo.to_csr();
        assert_eq!(a.indptr, vec![0, 2, 3]);
        assert_eq!(a.indices, vec![0, 2, 1]);
        assert_eq!(a.data, vec![2.0, 4.0, -1.0]);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn transpose_and_matvec() {
        let mut coo = CooMatrix::new(2, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 2, 2.0);
        coo.push(1, 1, 3.0);
        let a = coo.to_csr();
        let at = a.transpose();
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(at.matvec(&[1.0, 2.0]), vec![1.0, 6.0, 2.0]);
        assert_eq!(at.transpose(), a);
        assert_eq!(a.bilinear(&[1.0, 1.0], &[1.0, 1.0, 1.0]), 6.0);
    }
}

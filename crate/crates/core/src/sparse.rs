//! Compressed sparse row storage used for every fine-scale operator.

use std::io::Write;

use faer::sparse::{SparseColMat, SymbolicSparseColMat};

use crate::error::{NlmcError, Result};

/// Accumulates `(row, col, value)` entries before compression.
///
/// Duplicates are summed in insertion order, so pushing a symmetric pair
/// `(i, j, v)` / `(j, i, v)` from the same element produces bitwise-equal
/// entries after compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    /// Pushes `val` at `(row, col)` and, off the diagonal, at `(col, row)`.
    #[inline]
    pub fn push_sym(&mut self, row: usize, col: usize, val: f64) {
        self.push(row, col, val);
        if row != col {
            self.push(col, row, val);
        }
    }

    pub fn build(self, symmetric: bool) -> SparseMatrix {
        let TripletBuilder {
            nrows,
            ncols,
            mut entries,
        } = self;
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut k = 0;
        while k < entries.len() {
            let (r, c, mut v) = entries[k];
            k += 1;
            while k < entries.len() && entries[k].0 == r && entries[k].1 == c {
                v += entries[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }
}

/// Square or rectangular CSR matrix. Column indices are sorted within a row
/// and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            symmetric: nrows == ncols,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    /// Builds a matrix from sorted sparse rows (`(col, value)` pairs).
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(c < ncols);
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: rows.len(),
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// `selfᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] * cols.iter().zip(vals).map(|(&c, &v)| v * y[c]).sum::<f64>()
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Exact (bitwise) symmetry check.
    pub fn is_exactly_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        (0..self.nrows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| self.get(j, i).to_bits() == v.to_bits())
        })
    }

    /// `self + alpha * other`, preserving the symmetry flag when both are symmetric.
    pub fn add_scaled(&self, other: &SparseMatrix, alpha: f64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(NlmcError::DimensionMismatch {
                what: "sparse matrix sum",
                expected: self.nrows,
                found: other.nrows,
            });
        }
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let mut merged = Vec::with_capacity(ca.len() + cb.len());
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    merged.push((ca[p], va[p]));
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    merged.push((cb[q], alpha * vb[q]));
                    q += 1;
                } else {
                    merged.push((ca[p], va[p] + alpha * vb[q]));
                    p += 1;
                    q += 1;
                }
            }
            rows.push(merged);
        }
        let mut out = SparseMatrix::from_rows(self.ncols, &rows);
        out.symmetric = self.symmetric && other.symmetric;
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Restriction to `keep` rows and columns; `map[g]` gives the new index of
    /// global index `g` or `usize::MAX` when dropped.
    pub fn restrict(&self, keep: &[usize], map: &[usize]) -> SparseMatrix {
        let rows: Vec<Vec<(usize, f64)>> = keep
            .iter()
            .map(|&g| {
                let (cols, vals) = self.row(g);
                let mut r: Vec<(usize, f64)> = cols
                    .iter()
                    .zip(vals)
                    .filter(|(&c, _)| map[c] != usize::MAX)
                    .map(|(&c, &v)| (map[c], v))
                    .collect();
                r.sort_by_key(|e| e.0);
                r
            })
            .collect();
        let mut out = SparseMatrix::from_rows(keep.len(), &rows);
        out.symmetric = self.symmetric;
        out
    }

    /// Converts to faer's compressed-column format. For symmetric matrices the
    /// CSR arrays already describe the CSC of the transpose, i.e. the matrix itself.
    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let t = if self.symmetric {
            self.clone()
        } else {
            self.transpose()
        };
        let symbolic = SymbolicSparseColMat::new_checked(
            t.ncols,
            t.nrows,
            t.row_ptr.clone(),
            None,
            t.col_idx.clone(),
        );
        SparseColMat::new(symbolic, t.values)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = next[c];
                col_idx[k] = i;
                values[k] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Dense copy, for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    /// Writes `nrows ncols nnz` followed by one `row col value` line per entry
    /// (0-based indices, values in round-trip precision).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{i} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.0);
        b.push(0, 1, 1.0);
        b.push(0, 1, -1.0);
        b.push(1, 1, 4.0);
        let m = b.build(true);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn transpose_and_faer_roundtrip() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(0, 2, 5.0);
        b.push(1, 0, -1.0);
        let m = b.build(false);
        let t = m.transpose();
        assert_eq!(t.get(2, 0), 5.0);
        assert_eq!(t.get(0, 1), -1.0);
        let f = m.to_faer();
        assert_eq!(f.nrows(), 2);
        assert_eq!(f.ncols(), 3);
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = SparseMatrix::identity(3);
        let mut b = TripletBuilder::new(3, 3);
        b.push_sym(0, 2, 1.0);
        let b = b.build(true);
        let c = a.add_scaled(&b, 2.0).unwrap();
        assert_eq!(c.get(0, 2), 2.0);
        assert_eq!(c.get(2, 0), 2.0);
        assert_eq!(c.get(1, 1), 1.0);
        assert!(c.is_exactly_symmetric());
    }
}

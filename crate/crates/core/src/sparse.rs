//! Compressed sparse row storage and coordinate-format assembly.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Triplet accumulator. Duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct CooMatrix<T> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> CooMatrix<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        assert!(
            row < self.nrows && col < self.ncols,
            "entry ({row}, {col}) outside {}x{}",
            self.nrows,
            self.ncols
        );
        self.entries.push((row, col, value));
    }

    /// Sorts by (row, col) and sums duplicates. Summation order follows
    /// insertion order within each (row, col) group, so the result is
    /// independent of how the sort permutes unrelated entries.
    pub fn to_csr(&self) -> CsrMatrix<T> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&k| (self.entries[k].0, self.entries[k].1, k));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(order.len());
        let mut data: Vec<T> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = self.entries[k];
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut coo = CooMatrix::with_capacity(nrows, ncols, triplets.len());
        for &(r, c, v) in triplets {
            coo.push(r, c, v);
        }
        coo.to_csr()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn dot_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, alpha: T, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let s: T = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
            *yi += alpha * s;
        }
    }

    /// `y += alpha * Aᵀ x`
    pub fn tmul_vec_add(&self, alpha: T, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let (cols, vals) = self.row(i);
            let a = alpha * xi;
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += a * v;
            }
        }
    }

    pub fn tdot_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.ncols];
        self.tmul_vec_add(T::one(), x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut coo = CooMatrix::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.triplets() {
            coo.push(j, i, v);
        }
        coo.to_csr()
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= alpha;
        }
        out
    }

    /// `alpha * self + beta * other`
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!(self.shape(), other.shape());
        let mut coo = CooMatrix::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets() {
            coo.push(i, j, alpha * v);
        }
        for (i, j, v) in other.triplets() {
            coo.push(i, j, beta * v);
        }
        coo.to_csr()
    }

    pub fn with_added_diagonal(&self, diag: &[T]) -> Self {
        assert_eq!(diag.len(), self.nrows);
        assert_eq!(self.nrows, self.ncols);
        self.linear_combination(T::one(), &Self::from_diagonal(diag), T::one())
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in columns.iter().enumerate() {
            map[old] = new;
        }
        let mut coo = CooMatrix::new(self.nrows, columns.len());
        for (i, j, v) in self.triplets() {
            if map[j] != usize::MAX {
                coo.push(i, map[j], v);
            }
        }
        coo.to_csr()
    }

    pub fn column_norms(&self) -> Vec<T> {
        let mut sq = vec![T::zero(); self.ncols];
        for (_, j, v) in self.triplets() {
            sq[j] += v * v;
        }
        sq.into_iter().map(|s| s.sqrt()).collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let tol = rel_tol * self.max_abs();
        self.triplets().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol)
    }

    /// Per-row nonzero counts.
    pub fn row_counts(&self) -> Vec<usize> {
        self.indptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] += v;
        }
        out
    }

    /// Assembles a block matrix. `blocks[i][j] = None` is a zero block; every
    /// block row must have a defined height and every block column a width,
    /// given by `row_sizes` / `col_sizes`.
    pub fn block(
        blocks: &[Vec<Option<&CsrMatrix<T>>>],
        row_sizes: &[usize],
        col_sizes: &[usize],
    ) -> Result<Self> {
        let nrows: usize = row_sizes.iter().sum();
        let ncols: usize = col_sizes.iter().sum();
        let mut coo = CooMatrix::new(nrows, ncols);
        let mut r0 = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            if brow.len() != col_sizes.len() {
                return Err(Error::Dimension(format!("block row {bi} has {} blocks", brow.len())));
            }
            let mut c0 = 0;
            for (bj, blk) in brow.iter().enumerate() {
                if let Some(m) = blk {
                    if m.shape() != (row_sizes[bi], col_sizes[bj]) {
                        return Err(Error::Dimension(format!(
                            "block ({bi}, {bj}) is {:?}, expected {:?}",
                            m.shape(),
                            (row_sizes[bi], col_sizes[bj])
                        )));
                    }
                    for (i, j, v) in m.triplets() {
                        coo.push(r0 + i, c0 + j, v);
                    }
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        Ok(coo.to_csr())
    }

    /// Coordinate text: a `rows cols nnz` header line followed by one
    /// `row col value` line per stored entry (0-based indices, values in
    /// shortest round-trip form).
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 32 + 32);
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz()).unwrap();
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {:e}", v.as_f64()).unwrap();
        }
        out
    }

    pub fn from_coordinate_text(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        if dims.len() != 3 {
            return Err(Error::format(path, "header must be `rows cols nnz`"));
        }
        let mut coo = CooMatrix::with_capacity(dims[0], dims[1], dims[2]);
        for (lineno, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let parse_err = || Error::format(path, format!("bad entry on line {}", lineno + 2));
            let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            if i >= dims[0] || j >= dims[1] {
                return Err(parse_err());
            }
            coo.push(i, j, T::lit(v));
        }
        let m = coo.to_csr();
        if m.nnz() != dims[2] {
            return Err(Error::format(path, format!("expected {} entries, found {}", dims[2], m.nnz())));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn transpose_products_agree() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, -2.0), (1, 1, 5.0)]);
        let x = [1.0, 2.0];
        assert_eq!(m.tdot_vec(&x), m.transpose().dot_vec(&x));
        assert_eq!(m.dot_vec(&[1.0, 1.0, 1.0]), vec![-1.0, 5.0]);
    }

    #[test]
    fn block_layout() {
        let a = CsrMatrix::<f64>::identity(2);
        let b = CsrMatrix::from_triplets(2, 1, &[(1, 0, 7.0)]);
        let s = CsrMatrix::block(&[vec![Some(&a), Some(&b)], vec![Some(&b.transpose()), None]], &[2, 1], &[2, 1]).unwrap();
        assert_eq!(s.shape(), (3, 3));
        assert_eq!(s.get(1, 2), 7.0);
        assert_eq!(s.get(2, 1), 7.0);
        assert_eq!(s.get(2, 2), 0.0);
        assert!(CsrMatrix::block(&[vec![Some(&b)]], &[2], &[2]).is_err());
    }

    #[test]
    fn coordinate_text_round_trip_is_exact() {
        let m = CsrMatrix::from_triplets(3, 2, &[(0, 1, 0.1 + 0.2), (2, 0, -1.0e-300)]);
        let text = m.to_coordinate_text();
        let back = CsrMatrix::<f64>::from_coordinate_text(&text, "mem").unwrap();
        assert_eq!(m, back);
        assert!(CsrMatrix::<f64>::from_coordinate_text("2 2 1\n5 0 1.0\n", "mem").is_err());
    }
}

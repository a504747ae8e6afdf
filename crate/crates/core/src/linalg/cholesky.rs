use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::sparse::CsrMatrix;

/// Relative pivot floor: a pivot below this fraction of its diagonal entry
/// is treated as a zero pivot.
const PIVOT_FLOOR: f64 = 1e-11;

/// Envelope (profile) Cholesky factorization `A = L Lᵀ` of a sparse symmetric
/// positive definite matrix.
///
/// Row `i` of `L` is stored densely from its first structural nonzero up to
/// the diagonal. Lattice-ordered plate matrices have a narrow envelope, so no
/// fill-reducing permutation is applied.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T> {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    /// Factorizes using the lower triangle of `a`.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("cholesky of {:?} matrix", a.shape())));
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            let (cols, _) = a.row(i);
            *f = cols.iter().copied().filter(|&j| j <= i).min().unwrap_or(i);
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i] + 1);
        }
        let mut values = vec![T::zero(); offsets[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    values[offsets[i] + j - first[i]] = v;
                }
            }
        }

        let floor = T::lit(PIVOT_FLOOR);
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = values.split_at_mut(offsets[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &done[offsets[j]..offsets[j + 1]];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / ljj;
            }
            let diag = row_i[i - fi];
            let off = &row_i[..i - fi];
            let d = diag - dot(off, off);
            if !(d > floor * diag.abs()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d.as_f64() });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            first,
            offsets,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    fn row(&self, i: usize) -> &[T] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = dot(&row[..i - fi], &b[fi..i]);
            b[i] = (b[i] - s) / row[i - fi];
        }
        // Lᵀ x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (bk, &l) in b[fi..i].iter_mut().zip(&row[..i - fi]) {
                *bk -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

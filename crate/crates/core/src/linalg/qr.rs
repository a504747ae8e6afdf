use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Scalar};

/// Householder QR of a tall dense matrix, `A = Q R`, stored column-major.
#[derive(Debug, Clone)]
pub struct HouseholderQr<T> {
    rows: usize,
    cols: usize,
    // column-major: R in the upper triangle, reflector tails below it
    a: Vec<T>,
    // reflector heads (v[k] at row k) and scalings: H_k = I - beta_k v vᵀ
    head: Vec<T>,
    beta: Vec<T>,
}

impl<T: Scalar> HouseholderQr<T> {
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        let (rows, cols) = a.dim();
        if rows < cols {
            return Err(Error::Dimension(format!("QR needs rows >= cols, got {rows}x{cols}")));
        }
        let mut data = vec![T::zero(); rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                data[j * rows + i] = a[[i, j]];
            }
        }
        let mut head = vec![T::zero(); cols];
        let mut beta = vec![T::zero(); cols];
        for k in 0..cols {
            let (left, right) = data.split_at_mut((k + 1) * rows);
            let col = &mut left[k * rows + k..(k + 1) * rows];
            let alpha = norm2(col);
            if alpha == T::zero() {
                head[k] = T::zero();
                beta[k] = T::zero();
                continue;
            }
            let x0 = col[0];
            let r_kk = if x0 >= T::zero() { -alpha } else { alpha };
            let v0 = x0 - r_kk;
            // v = [v0, col[1..]], beta = 2 / vᵀv = 1 / (alpha (alpha + |x0|))
            let b = T::one() / (alpha * (alpha + x0.abs()));
            head[k] = v0;
            beta[k] = b;
            col[0] = r_kk;
            let tail: &[T] = &col[1..];
            for j in (k + 1)..cols {
                let cj = &mut right[(j - k - 1) * rows + k..(j - k) * rows];
                let s = (v0 * cj[0] + dot(tail, &cj[1..])) * b;
                cj[0] -= s * v0;
                for (c, &t) in cj[1..].iter_mut().zip(tail) {
                    *c -= s * t;
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            a: data,
            head,
            beta,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn r_diagonal(&self) -> Vec<T> {
        (0..self.cols).map(|k| self.a[k * self.rows + k]).collect()
    }

    /// Numerical rank with the threshold `eps * max(rows, cols) * max|R_kk|`.
    pub fn rank(&self) -> usize {
        let d = self.r_diagonal();
        let max = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::epsilon() * T::from_usize_lossy(self.rows.max(self.cols)) * max;
        d.iter().filter(|v| v.abs() > tol).count()
    }

    pub fn is_full_rank(&self) -> bool {
        self.cols == 0 || self.rank() == self.cols
    }

    /// `b <- Qᵀ b`
    pub fn apply_qt(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.rows);
        for k in 0..self.cols {
            if self.beta[k] == T::zero() {
                continue;
            }
            let tail = &self.a[k * self.rows + k + 1..(k + 1) * self.rows];
            let v0 = self.head[k];
            let s = (v0 * b[k] + dot(tail, &b[k + 1..])) * self.beta[k];
            b[k] -= s * v0;
            for (bi, &t) in b[k + 1..].iter_mut().zip(tail) {
                *bi -= s * t;
            }
        }
    }

    /// `b <- Q b`
    pub fn apply_q(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.rows);
        for k in (0..self.cols).rev() {
            if self.beta[k] == T::zero() {
                continue;
            }
            let tail = &self.a[k * self.rows + k + 1..(k + 1) * self.rows];
            let v0 = self.head[k];
            let s = (v0 * b[k] + dot(tail, &b[k + 1..])) * self.beta[k];
            b[k] -= s * v0;
            for (bi, &t) in b[k + 1..].iter_mut().zip(tail) {
                *bi -= s * t;
            }
        }
    }

    /// Back substitution `R x = c` for the leading `cols` entries of `c`.
    fn solve_r(&self, c: &mut [T]) {
        for k in (0..self.cols).rev() {
            let mut s = c[k];
            for j in (k + 1)..self.cols {
                s -= self.a[j * self.rows + k] * c[j];
            }
            c[k] = s / self.a[k * self.rows + k];
        }
    }

    /// `R⁻ᵀ c` in place (forward substitution with the transpose).
    fn solve_rt(&self, c: &mut [T]) {
        for k in 0..self.cols {
            let col = &self.a[k * self.rows..k * self.rows + k];
            let s = c[k] - dot(col, &c[..k]);
            c[k] = s / self.a[k * self.rows + k];
        }
    }

    /// Least-squares solution of `A x ≈ b`; requires full column rank.
    pub fn solve_least_squares(&self, b: &[T]) -> Result<Vec<T>> {
        if !self.is_full_rank() {
            return Err(Error::RankDeficient {
                rank: self.rank(),
                cols: self.cols,
            });
        }
        let mut c = b.to_vec();
        self.apply_qt(&mut c);
        self.solve_r(&mut c);
        c.truncate(self.cols);
        Ok(c)
    }

    /// Column-wise least squares for a right-hand-side matrix (`rows x k`).
    pub fn solve_least_squares_matrix(&self, b: ArrayView2<'_, T>) -> Result<Array2<T>> {
        assert_eq!(b.nrows(), self.rows);
        let mut out = Array2::zeros((self.cols, b.ncols()));
        for (j, col) in b.columns().into_iter().enumerate() {
            let x = self.solve_least_squares(&col.to_vec())?;
            for (i, v) in x.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }

    /// The left pseudo-inverse `R⁻¹ Q₁ᵀ` (`cols x rows`).
    pub fn pseudo_inverse(&self) -> Result<Array2<T>> {
        if !self.is_full_rank() {
            return Err(Error::RankDeficient {
                rank: self.rank(),
                cols: self.cols,
            });
        }
        // row i of the pseudo-inverse is (Q₁ R⁻ᵀ)ᵀ e_i; build Q₁ R⁻ᵀ column by column
        let mut out = Array2::zeros((self.cols, self.rows));
        for i in 0..self.rows {
            let mut e = vec![T::zero(); self.rows];
            e[i] = T::one();
            self.apply_qt(&mut e);
            // (R⁻¹ Q₁ᵀ e_i) = R⁻¹ (Qᵀ e_i)[..cols]
            let mut c = e[..self.cols].to_vec();
            self.solve_r(&mut c);
            for (k, v) in c.into_iter().enumerate() {
                out[[k, i]] = v;
            }
        }
        Ok(out)
    }

    /// Solves the normal-equation system `AᵀA x = c` via `R⁻¹ R⁻ᵀ c`.
    pub fn solve_normal(&self, c: &[T]) -> Vec<T> {
        let mut x = c.to_vec();
        self.solve_rt(&mut x);
        self.solve_r(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn least_squares_on_overdetermined_line_fit() {
        // fit y = 1 + 2x exactly
        let a: Array2<f64> = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let b = [1.0, 3.0, 5.0, 7.0];
        let qr = HouseholderQr::new(a.view()).unwrap();
        let x = qr.solve_least_squares(&b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        let pinv = qr.pseudo_inverse().unwrap();
        let x2 = pinv.dot(&ndarray::Array1::from(b.to_vec()));
        assert!((x2[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn q_is_orthogonal() {
        let a: Array2<f64> = array![[2.0, -1.0], [0.5, 3.0], [4.0, 1.0]];
        let qr = HouseholderQr::new(a.view()).unwrap();
        let mut b = vec![0.3, -0.7, 1.1];
        let orig = b.clone();
        qr.apply_qt(&mut b);
        assert!((norm2(&b) - norm2(&orig)).abs() < 1e-14);
        qr.apply_q(&mut b);
        for (u, v) in b.iter().zip(&orig) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let qr = HouseholderQr::new(a.view()).unwrap();
        assert_eq!(qr.rank(), 1);
        assert!(matches!(qr.solve_least_squares(&[1.0, 1.0, 1.0]), Err(Error::RankDeficient { .. })));
        assert!(HouseholderQr::new(a.t()).is_err());
    }
}

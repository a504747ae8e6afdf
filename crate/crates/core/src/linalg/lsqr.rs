//! LSQR: Golub–Kahan bidiagonalization for `min ||A x - b||₂`.
//!
//! Paige & Saunders' stopping rules are used: the iteration terminates when
//! either the system is compatible to within
//! `||r|| <= btol ||b|| + atol ||A|| ||x||`, or the normal-equation residual
//! satisfies `||Aᵀ r|| <= atol ||A|| ||r||`, where `||A||` is the running
//! Frobenius-norm estimate of the bidiagonal. Started from `x = 0`, the
//! iterates stay in the row space of `A`, so the limit is the minimum-norm
//! minimizer.

use crate::scalar::{norm2, scale_in_place, Scalar};
use crate::sparse::CsrMatrix;

/// Matrix-free linear operator.
pub trait LinearOperator<T> {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[T], y: &mut [T]);
    /// `x = Aᵀ y`
    fn apply_transpose(&self, y: &[T], x: &mut [T]);
}

impl<T: Scalar> LinearOperator<T> for CsrMatrix<T> {
    fn nrows(&self) -> usize {
        CsrMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        CsrMatrix::ncols(self)
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.mul_vec(x, y);
    }
    fn apply_transpose(&self, y: &[T], x: &mut [T]) {
        x.iter_mut().for_each(|v| *v = T::zero());
        self.tmul_vec_add(T::one(), y, x);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LsqrParams<T> {
    pub atol: T,
    pub btol: T,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `b = 0`, so `x = 0` is exact.
    ZeroRhs,
    /// `A x = b` holds to the compatible-system tolerance.
    Compatible,
    /// Normal-equation residual below tolerance.
    LeastSquares,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LsqrOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Estimate of `||b - A x||`.
    pub rnorm: T,
    /// Estimate of `||Aᵀ (b - A x)||`.
    pub arnorm: T,
    /// Frobenius-norm estimate of `A`.
    pub anorm: T,
    pub xnorm: T,
    pub bnorm: T,
}

impl<T: Scalar> LsqrOutcome<T> {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::IterationLimit
    }

    /// `||Aᵀr|| / (||A|| ||r||)`, zero for an exact fit.
    pub fn optimality(&self) -> T {
        if self.rnorm == T::zero() || self.anorm == T::zero() {
            T::zero()
        } else {
            self.arnorm / (self.anorm * self.rnorm)
        }
    }
}

pub fn lsqr<T: Scalar, A: LinearOperator<T> + ?Sized>(op: &A, b: &[T], params: LsqrParams<T>) -> LsqrOutcome<T> {
    let (m, n) = (op.nrows(), op.ncols());
    assert_eq!(b.len(), m);
    let mut x = vec![T::zero(); n];
    let mut u = b.to_vec();
    let bnorm = norm2(&u);
    let mut beta = bnorm;
    let done = |x: Vec<T>, stop, iterations, rnorm, arnorm, anorm, xnorm| LsqrOutcome {
        x,
        iterations,
        stop,
        rnorm,
        arnorm,
        anorm,
        xnorm,
        bnorm,
    };
    if beta == T::zero() {
        return done(x, StopReason::ZeroRhs, 0, T::zero(), T::zero(), T::zero(), T::zero());
    }
    scale_in_place(T::one() / beta, &mut u);
    let mut v = vec![T::zero(); n];
    op.apply_transpose(&u, &mut v);
    let mut alpha = norm2(&v);
    if alpha == T::zero() {
        // b is orthogonal to the range of A
        return done(x, StopReason::LeastSquares, 0, beta, T::zero(), T::zero(), T::zero());
    }
    scale_in_place(T::one() / alpha, &mut v);
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm_sq = T::zero();
    let mut rnorm = beta;
    let mut arnorm = alpha * beta;
    let mut tmp_m = vec![T::zero(); m];
    let mut tmp_n = vec![T::zero(); n];

    for itn in 1..=params.max_iter {
        // u = A v - alpha u
        op.apply(&v, &mut tmp_m);
        for (ui, ti) in u.iter_mut().zip(&tmp_m) {
            *ui = *ti - alpha * *ui;
        }
        beta = norm2(&u);
        anorm_sq += alpha * alpha + beta * beta;
        if beta > T::zero() {
            scale_in_place(T::one() / beta, &mut u);
            // v = Aᵀ u - beta v
            op.apply_transpose(&u, &mut tmp_n);
            for (vi, ti) in v.iter_mut().zip(&tmp_n) {
                *vi = *ti - beta * *vi;
            }
            alpha = norm2(&v);
            if alpha > T::zero() {
                scale_in_place(T::one() / alpha, &mut v);
            }
        }

        let rho = (rhobar * rhobar + beta * beta).sqrt();
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar = s * phibar;
        let tau = s * phi;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        for ((xi, wi), vi) in x.iter_mut().zip(w.iter_mut()).zip(&v) {
            *xi += t1 * *wi;
            *wi = *vi + t2 * *wi;
        }

        let anorm = anorm_sq.sqrt();
        let xnorm = norm2(&x);
        rnorm = phibar;
        arnorm = alpha * tau.abs();

        let test1 = rnorm / bnorm;
        let rtol = params.btol + params.atol * anorm * xnorm / bnorm;
        let test2 = if rnorm > T::zero() { arnorm / (anorm * rnorm) } else { T::zero() };
        if test1 <= rtol {
            return done(x, StopReason::Compatible, itn, rnorm, arnorm, anorm, xnorm);
        }
        if test2 <= params.atol {
            return done(x, StopReason::LeastSquares, itn, rnorm, arnorm, anorm, xnorm);
        }
    }
    let xnorm = norm2(&x);
    done(x, StopReason::IterationLimit, params.max_iter, rnorm, arnorm, anorm_sq.sqrt(), xnorm)
}

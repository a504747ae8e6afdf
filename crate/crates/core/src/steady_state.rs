//! Static actuator forces for a target wavefront.
//!
//! The steady state `M3 z = B u`, `y = C z` is posed as the stacked least
//! squares problem
//!
//! ```text
//! min_w || g - S w ||,   S = [[M3, -B], [C, 0]],   g = [0; y_d],   w = [z; u]
//! ```
//!
//! and solved with LSQR. Plain LSQR on `S` stalls because `M3` is stiff and
//! badly scaled against `C`. When `M3` admits a Cholesky factor the problem is
//! right-preconditioned with `P = [[M3, -B], [0, I]]`: in the unknowns
//! `v = M3 z - B u` and `u` the operator becomes
//!
//! ```text
//! S P⁻¹ = [[I, 0], [C M3⁻¹, C M3⁻¹ B]]
//! ```
//!
//! whose influence block is additionally column-equilibrated. `z` is recovered
//! from `M3 z = v + B u`. Without a factor (rigid modes) the fallback is LSQR on
//! the column-equilibrated `S`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{lsqr, EnvelopeCholesky, LinearOperator, LsqrOutcome, LsqrParams, StopReason};
use crate::plate_model::SecondOrderModel;
use crate::scalar::{norm2, Scalar};
use crate::sparse::CsrMatrix;
use crate::zernike::{synthesize_target, ModeIndex, ZernikeMap};

/// Largest `n` for which [`dense_influence`] is allowed.
pub const DENSE_INFLUENCE_LIMIT: usize = 5000;

#[derive(Debug, Clone)]
pub struct AugmentedSystem<T> {
    /// (n+r) x (n+m)
    pub s: CsrMatrix<T>,
    /// `[0; y_d]`
    pub g: Vec<T>,
    pub m3: CsrMatrix<T>,
    pub b: CsrMatrix<T>,
    pub c: CsrMatrix<T>,
}

impl<T: Scalar> AugmentedSystem<T> {
    pub fn n(&self) -> usize {
        self.m3.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn r(&self) -> usize {
        self.c.nrows()
    }
    pub fn target(&self) -> &[T] {
        &self.g[self.n()..]
    }
}

pub fn assemble_augmented<T: Scalar>(model: &SecondOrderModel<T>, y_d: &[T]) -> Result<AugmentedSystem<T>> {
    augmented_from_blocks(&model.m3, &model.b, &model.c, y_d)
}

fn augmented_from_blocks<T: Scalar>(m3: &CsrMatrix<T>, b: &CsrMatrix<T>, c: &CsrMatrix<T>, y_d: &[T]) -> Result<AugmentedSystem<T>> {
    let (n, m, r) = (m3.nrows(), b.ncols(), c.nrows());
    if y_d.len() != r {
        return Err(Error::Dimension(format!("target has length {}, model observes {r} points", y_d.len())));
    }
    let neg_b = b.scaled(-T::one());
    let s = CsrMatrix::block(&[vec![Some(m3), Some(&neg_b)], vec![Some(c), None]], &[n, r], &[n, m])?;
    let mut g = vec![T::zero(); n + r];
    g[n..].copy_from_slice(y_d);
    Ok(AugmentedSystem {
        s,
        g,
        m3: m3.clone(),
        b: b.clone(),
        c: c.clone(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SolverParams<T> {
    pub tol: T,
    /// Defaults to `20 (n + m)` when `None`.
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateSolution<T> {
    pub u: Vec<T>,
    pub z: Vec<T>,
    /// `||g - S w||`
    pub residual_norm: T,
    /// `C z`
    pub y_star: Vec<T>,
    pub iterations: usize,
    pub stop: StopReason,
    /// LSQR's normal-equation test `||Aᵀr|| / (||A|| ||r||)` on the operator
    /// actually iterated on.
    pub optimality: T,
    /// `||Sᵀ(g - S w)|| / ||Sᵀ g||` in the original unknowns.
    pub gradient_ratio: T,
    pub preconditioned: bool,
}

/// Right-preconditioned operator `[[I, 0], [C M3⁻¹, C M3⁻¹ B D]]`.
struct Preconditioned<'a, T> {
    chol: &'a EnvelopeCholesky<T>,
    b: &'a CsrMatrix<T>,
    c: &'a CsrMatrix<T>,
    du: &'a [T],
}

impl<T: Scalar> LinearOperator<T> for Preconditioned<'_, T> {
    fn nrows(&self) -> usize {
        self.b.nrows() + self.c.nrows()
    }
    fn ncols(&self) -> usize {
        self.b.nrows() + self.b.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.b.nrows();
        let (v, u) = x.split_at(n);
        let scaled: Vec<T> = u.iter().zip(self.du).map(|(&a, &d)| a * d).collect();
        let mut rhs = v.to_vec();
        self.b.mul_vec_add(T::one(), &scaled, &mut rhs);
        self.chol.solve_in_place(&mut rhs);
        let (top, bottom) = y.split_at_mut(n);
        top.copy_from_slice(v);
        self.c.mul_vec(&rhs, bottom);
    }
    fn apply_transpose(&self, y: &[T], x: &mut [T]) {
        let n = self.b.nrows();
        let (top, bottom) = y.split_at(n);
        let mut t = vec![T::zero(); n];
        self.c.tmul_vec_add(T::one(), bottom, &mut t);
        self.chol.solve_in_place(&mut t);
        let (xv, xu) = x.split_at_mut(n);
        for ((o, &a), &b) in xv.iter_mut().zip(top).zip(&t) {
            *o = a + b;
        }
        xu.iter_mut().for_each(|v| *v = T::zero());
        self.b.tmul_vec_add(T::one(), &t, xu);
        for (o, &d) in xu.iter_mut().zip(self.du) {
            *o *= d;
        }
    }
}

/// `S D` with a diagonal column scaling `D`.
struct ColumnScaled<'a, T> {
    s: &'a CsrMatrix<T>,
    d: &'a [T],
}

impl<T: Scalar> LinearOperator<T> for ColumnScaled<'_, T> {
    fn nrows(&self) -> usize {
        self.s.nrows()
    }
    fn ncols(&self) -> usize {
        self.s.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let scaled: Vec<T> = x.iter().zip(self.d).map(|(&a, &d)| a * d).collect();
        self.s.mul_vec(&scaled, y);
    }
    fn apply_transpose(&self, y: &[T], x: &mut [T]) {
        x.iter_mut().for_each(|v| *v = T::zero());
        self.s.tmul_vec_add(T::one(), y, x);
        for (o, &d) in x.iter_mut().zip(self.d) {
            *o *= d;
        }
    }
}

fn inverse_norms<T: Scalar>(norms: &[T]) -> Vec<T> {
    norms.iter().map(|&v| if v > T::zero() { T::one() / v } else { T::one() }).collect()
}

enum Strategy<T> {
    Preconditioned { chol: EnvelopeCholesky<T>, du: Vec<T> },
    ColumnScaled { s: CsrMatrix<T>, d: Vec<T> },
}

/// Reusable solver: the factorization and scalings are set up once and shared
/// across targets.
pub struct SteadyStateSolver<T> {
    m3: CsrMatrix<T>,
    b: CsrMatrix<T>,
    c: CsrMatrix<T>,
    s: CsrMatrix<T>,
    strategy: Strategy<T>,
}

impl<T: Scalar> SteadyStateSolver<T> {
    pub fn new(model: &SecondOrderModel<T>) -> Result<Self> {
        Self::from_blocks(&model.m3, &model.b, &model.c)
    }

    pub fn from_augmented(aug: &AugmentedSystem<T>) -> Result<Self> {
        Self::from_blocks(&aug.m3, &aug.b, &aug.c)
    }

    fn from_blocks(m3: &CsrMatrix<T>, b: &CsrMatrix<T>, c: &CsrMatrix<T>) -> Result<Self> {
        let zero = vec![T::zero(); c.nrows()];
        let s = augmented_from_blocks(m3, b, c, &zero)?.s;
        let strategy = match EnvelopeCholesky::factor(m3) {
            Ok(chol) => {
                // column norms of the influence matrix C M3⁻¹ B
                let norms: Vec<T> = (0..b.ncols())
                    .map(|j| {
                        let mut col = vec![T::zero(); b.nrows()];
                        b.mul_vec(&unit(b.ncols(), j), &mut col);
                        chol.solve_in_place(&mut col);
                        norm2(&c.dot_vec(&col))
                    })
                    .collect();
                Strategy::Preconditioned {
                    chol,
                    du: inverse_norms(&norms),
                }
            }
            Err(err) => {
                log::warn!("stiffness not factorizable ({err}); falling back to column-scaled LSQR");
                Strategy::ColumnScaled {
                    d: inverse_norms(&s.column_norms()),
                    s: s.clone(),
                }
            }
        };
        Ok(Self {
            m3: m3.clone(),
            b: b.clone(),
            c: c.clone(),
            s,
            strategy,
        })
    }

    pub fn is_preconditioned(&self) -> bool {
        matches!(self.strategy, Strategy::Preconditioned { .. })
    }

    /// Minimizes `||[0; y_d] - S [z; u]||`.
    pub fn solve(&self, y_d: &[T], params: SolverParams<T>) -> Result<SteadyStateSolution<T>> {
        let (n, m, r) = (self.m3.nrows(), self.b.ncols(), self.c.nrows());
        if y_d.len() != r {
            return Err(Error::Dimension(format!("target has length {}, model observes {r} points", y_d.len())));
        }
        if !(params.tol > T::zero()) {
            return Err(Error::param("tol", "must be positive"));
        }
        let mut g = vec![T::zero(); n + r];
        g[n..].copy_from_slice(y_d);
        let lsqr_params = LsqrParams {
            atol: params.tol,
            btol: params.tol,
            max_iter: params.max_iter.unwrap_or(20 * (n + m)),
        };
        let (z, u, out) = match &self.strategy {
            Strategy::Preconditioned { chol, du } => {
                let op = Preconditioned {
                    chol,
                    b: &self.b,
                    c: &self.c,
                    du,
                };
                let out = lsqr(&op, &g, lsqr_params);
                let u: Vec<T> = out.x[n..].iter().zip(du).map(|(&a, &d)| a * d).collect();
                let mut z = out.x[..n].to_vec();
                self.b.mul_vec_add(T::one(), &u, &mut z);
                chol.solve_in_place(&mut z);
                (z, u, out)
            }
            Strategy::ColumnScaled { s, d } => {
                let out = lsqr(&ColumnScaled { s, d }, &g, lsqr_params);
                let w: Vec<T> = out.x.iter().zip(d).map(|(&a, &b)| a * b).collect();
                (w[..n].to_vec(), w[n..].to_vec(), out)
            }
        };
        self.finish(&g, z, u, out)
    }

    fn finish(&self, g: &[T], z: Vec<T>, u: Vec<T>, out: LsqrOutcome<T>) -> Result<SteadyStateSolution<T>> {
        let mut w = z.clone();
        w.extend_from_slice(&u);
        let mut resid = g.to_vec();
        self.s.mul_vec_add(-T::one(), &w, &mut resid);
        let residual_norm = norm2(&resid);
        let grad = norm2(&self.s.tdot_vec(&resid));
        let grad0 = norm2(&self.s.tdot_vec(g));
        let gradient_ratio = if grad0 > T::zero() { grad / grad0 } else { T::zero() };
        if !out.converged() {
            return Err(Error::NotConverged {
                iterations: out.iterations,
                residual: residual_norm.as_f64(),
                optimality: out.optimality().as_f64(),
            });
        }
        let y_star = self.c.dot_vec(&z);
        Ok(SteadyStateSolution {
            u,
            z,
            residual_norm,
            y_star,
            iterations: out.iterations,
            stop: out.stop,
            optimality: out.optimality(),
            gradient_ratio,
            preconditioned: self.is_preconditioned(),
        })
    }

    /// `C M3⁻¹ B u` using the stored factor.
    pub fn apply_control(&self, u: &[T]) -> Result<Vec<T>> {
        match &self.strategy {
            Strategy::Preconditioned { chol, .. } => Ok(static_response(chol, &self.b, &self.c, u)),
            Strategy::ColumnScaled { .. } => apply_control_blocks(&self.m3, &self.b, &self.c, u),
        }
    }
}

fn unit<T: Scalar>(len: usize, j: usize) -> Vec<T> {
    let mut e = vec![T::zero(); len];
    e[j] = T::one();
    e
}

fn static_response<T: Scalar>(chol: &EnvelopeCholesky<T>, b: &CsrMatrix<T>, c: &CsrMatrix<T>, u: &[T]) -> Vec<T> {
    let mut z = b.dot_vec(u);
    chol.solve_in_place(&mut z);
    c.dot_vec(&z)
}

fn factor_stiffness<T: Scalar>(m3: &CsrMatrix<T>) -> Result<EnvelopeCholesky<T>> {
    EnvelopeCholesky::factor(m3).map_err(|e| match e {
        Error::NotPositiveDefinite { row, pivot } => Error::RigidModes { row, pivot },
        other => other,
    })
}

fn apply_control_blocks<T: Scalar>(m3: &CsrMatrix<T>, b: &CsrMatrix<T>, c: &CsrMatrix<T>, u: &[T]) -> Result<Vec<T>> {
    if u.len() != b.ncols() {
        return Err(Error::Dimension(format!("force vector has length {}, model has {} actuators", u.len(), b.ncols())));
    }
    Ok(static_response(&factor_stiffness(m3)?, b, c, u))
}

pub fn solve_steady_state<T: Scalar>(aug: &AugmentedSystem<T>, params: SolverParams<T>) -> Result<SteadyStateSolution<T>> {
    SteadyStateSolver::from_augmented(aug)?.solve(aug.target(), params)
}

/// Static wavefront `C z` with `M3 z = B u`.
pub fn apply_control<T: Scalar>(model: &SecondOrderModel<T>, u: &[T]) -> Result<Vec<T>> {
    apply_control_blocks(&model.m3, &model.b, &model.c, u)
}

/// `||y_d - y*|| / ||y_d||`
pub fn control_error<T: Scalar>(y_d: &[T], y_star: &[T]) -> Result<T> {
    if y_d.len() != y_star.len() {
        return Err(Error::Dimension(format!("{} vs {} wavefront samples", y_d.len(), y_star.len())));
    }
    let denom = norm2(y_d);
    if denom == T::zero() {
        return Err(Error::ZeroTarget);
    }
    let diff: Vec<T> = y_d.iter().zip(y_star).map(|(&a, &b)| a - b).collect();
    Ok(norm2(&diff) / denom)
}

/// The influence matrix `C M3⁻¹ B` (r x m), one sparse solve per actuator.
pub fn dense_influence<T: Scalar>(model: &SecondOrderModel<T>) -> Result<Array2<T>> {
    if model.n() > DENSE_INFLUENCE_LIMIT {
        return Err(Error::TooLarge {
            n: model.n(),
            limit: DENSE_INFLUENCE_LIMIT,
        });
    }
    let chol = factor_stiffness(&model.m3)?;
    let (r, m) = (model.r(), model.m());
    let mut g = Array2::zeros((r, m));
    for j in 0..m {
        let col = static_response(&chol, &model.b, &model.c, &unit(m, j));
        for (i, v) in col.into_iter().enumerate() {
            g[[i, j]] = v;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct SweepRow<T> {
    pub mode: ModeIndex,
    pub e: T,
    pub residual_norm: T,
    pub iterations: usize,
    pub u: Vec<T>,
}

/// Solves for each mode's target `amplitude · Z_mode`; rows sorted by Noll index.
pub fn sweep_modes<T: Scalar>(
    model: &SecondOrderModel<T>,
    zmap: &ZernikeMap<T>,
    modes: &[ModeIndex],
    amplitude: T,
    params: SolverParams<T>,
) -> Result<Vec<SweepRow<T>>> {
    if modes.is_empty() {
        return Err(Error::param("modes", "mode list is empty"));
    }
    if amplitude == T::zero() {
        return Err(Error::ZeroTarget);
    }
    let solver = SteadyStateSolver::new(model)?;
    let points = model.observation_points();
    let mut sorted = modes.to_vec();
    sorted.sort_by_key(|m| m.noll_j);
    sorted
        .par_iter()
        .map(|&mode| sweep_one(&solver, &points, zmap.norm_radius, mode, amplitude, params))
        .collect()
}

/// One row of [`sweep_modes`] against a prepared solver.
pub fn sweep_one<T: Scalar>(
    solver: &SteadyStateSolver<T>,
    points: &[(T, T)],
    norm_radius: T,
    mode: ModeIndex,
    amplitude: T,
    params: SolverParams<T>,
) -> Result<SweepRow<T>> {
    let y_d = synthesize_target(mode, amplitude, points, norm_radius)?;
    let sol = solver.solve(&y_d, params)?;
    Ok(SweepRow {
        mode,
        e: control_error(&y_d, &sol.y_star)?,
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        u: sol.u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (CsrMatrix<f64>, CsrMatrix<f64>, CsrMatrix<f64>) {
        let m3 = CsrMatrix::from_triplets(2, 2, &[(0, 0, 3.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]);
        let b = CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]);
        let c = CsrMatrix::from_triplets(1, 2, &[(0, 1, 1.0)]);
        (m3, b, c)
    }

    #[test]
    fn toy_block_layout() {
        let (m3, b, c) = toy();
        let aug = augmented_from_blocks(&m3, &b, &c, &[0.5]).unwrap();
        let d = aug.s.to_dense();
        let expect = [[3.0, -1.0, -1.0], [-1.0, 2.0, 0.0], [0.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[[i, j]], expect[i][j]);
            }
        }
        assert_eq!(aug.g, vec![0.0, 0.0, 0.5]);
        assert_eq!(aug.s.nnz(), m3.nnz() + b.nnz() + c.nnz());
        assert!(augmented_from_blocks(&m3, &b, &c, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn toy_square_system_is_exact() {
        // S is square and nonsingular, so the residual vanishes
        let (m3, b, c) = toy();
        let aug = augmented_from_blocks(&m3, &b, &c, &[0.5]).unwrap();
        let sol = solve_steady_state(&aug, SolverParams::default()).unwrap();
        assert!(sol.residual_norm < 1e-12);
        assert!((sol.y_star[0] - 0.5).abs() < 1e-12);
        // z1 = 0.5, z0 = 2 z1 = 1, u = 3 z0 - z1 = 2.5
        assert!((sol.u[0] - 2.5).abs() < 1e-10);
        let zero = solve_steady_state(&augmented_from_blocks(&m3, &b, &c, &[0.0]).unwrap(), SolverParams::default()).unwrap();
        assert!(zero.u.iter().chain(&zero.z).all(|v| *v == 0.0));
        assert_eq!(zero.residual_norm, 0.0);
    }

    #[test]
    fn control_error_cases() {
        let y = [1.0f64, -2.0, 0.5];
        assert_eq!(control_error(&y, &y).unwrap(), 0.0);
        assert!((control_error(&y, &[0.0; 3]).unwrap() - 1.0).abs() < 1e-15);
        let twice: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((control_error(&y, &twice).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(control_error(&[0.0; 3], &y), Err(Error::ZeroTarget)));
    }

    #[test]
    fn singular_stiffness_reported_as_rigid_modes() {
        let m3 = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]);
        let b = CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]);
        let c = CsrMatrix::from_triplets(1, 2, &[(0, 1, 1.0)]);
        assert!(matches!(apply_control_blocks(&m3, &b, &c, &[1.0]), Err(Error::RigidModes { .. })));
        // the least-squares path still works through the fallback
        let aug = augmented_from_blocks(&m3, &b, &c, &[1.0f64]).unwrap();
        let sol = solve_steady_state(&aug, SolverParams::default()).unwrap();
        assert!(!sol.preconditioned);
        assert!(sol.residual_norm.is_finite());
    }
}

//! First-order form and backward-Euler integration of the plate model, plus
//! random-excitation dataset generation.
//!
//! With `x = [z; v]`, `v = ż`, the descriptor form is `E ẋ = A x + G u` with
//! `E = diag(I, M1)`, `A = [[0, I], [-M3, -M2]]`, `G = [0; B]`. A backward-Euler
//! step `(E - hA) x⁺ = E x + h G u` is solved by eliminating `z⁺ = z + h v⁺`:
//!
//! ```text
//! (M1 + h M2 + h² M3) v⁺ = M1 v - h M3 z + h B u
//! ```
//!
//! The step matrix is symmetric positive definite and factored once.
//!
//! Timing convention: column `k` of an input sequence is the force held over
//! the step `k -> k+1`, so output `q_k` depends on `u_{k-1}, u_{k-2}, ...` only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::EnvelopeCholesky;
use crate::plate_model::SecondOrderModel;
use crate::rng;
use crate::scalar::{dot, Scalar};
use crate::sparse::CsrMatrix;
use crate::zernike::ZernikeMap;

#[derive(Debug, Clone)]
pub struct DescriptorSystem<T> {
    /// `diag(I, M1)`
    pub e: CsrMatrix<T>,
    /// `[[0, I], [-M3, -M2]]`
    pub a: CsrMatrix<T>,
    /// `[0; B]`
    pub g: CsrMatrix<T>,
    /// r x n output map acting on `z`
    pub c: CsrMatrix<T>,
    m1: CsrMatrix<T>,
    m2: CsrMatrix<T>,
    m3: CsrMatrix<T>,
    b: CsrMatrix<T>,
}

impl<T: Scalar> DescriptorSystem<T> {
    /// Second-order dimension `n`; the state has `2n` entries.
    pub fn n(&self) -> usize {
        self.m1.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `½ (vᵀ M1 v + zᵀ M3 z)`
    pub fn energy(&self, z: &[T], v: &[T]) -> T {
        T::lit(0.5) * (dot(v, &self.m1.dot_vec(v)) + dot(z, &self.m3.dot_vec(z)))
    }
}

pub fn to_descriptor<T: Scalar>(model: &SecondOrderModel<T>) -> Result<DescriptorSystem<T>> {
    let n = model.n();
    let m = model.m();
    let eye = CsrMatrix::identity(n);
    let e = CsrMatrix::block(&[vec![Some(&eye), None], vec![None, Some(&model.m1)]], &[n, n], &[n, n])?;
    let neg_m3 = model.m3.scaled(-T::one());
    let neg_m2 = model.m2.scaled(-T::one());
    let a = CsrMatrix::block(&[vec![None, Some(&eye)], vec![Some(&neg_m3), Some(&neg_m2)]], &[n, n], &[n, n])?;
    let g = CsrMatrix::block(&[vec![None], vec![Some(&model.b)]], &[n, n], &[m])?;
    Ok(DescriptorSystem {
        e,
        a,
        g,
        c: model.c.clone(),
        m1: model.m1.clone(),
        m2: model.m2.clone(),
        m3: model.m3.clone(),
        b: model.b.clone(),
    })
}

/// Backward-Euler stepper holding the factored step matrix.
pub struct BackwardEuler<'a, T> {
    sys: &'a DescriptorSystem<T>,
    h: T,
    chol: EnvelopeCholesky<T>,
}

impl<'a, T: Scalar> BackwardEuler<'a, T> {
    pub fn new(sys: &'a DescriptorSystem<T>, h: T) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::param("h", "time step must be positive"));
        }
        let step = sys.m1.linear_combination(T::one(), &sys.m2, h).linear_combination(T::one(), &sys.m3, h * h);
        let chol = EnvelopeCholesky::factor(&step).map_err(|_| Error::SingularStepMatrix { h: h.as_f64() })?;
        Ok(Self { sys, h, chol })
    }

    pub fn h(&self) -> T {
        self.h
    }

    /// Advances `(z, v)` by one step under force `u`.
    pub fn step(&self, z: &mut [T], v: &mut [T], u: &[T]) {
        let h = self.h;
        let mut rhs = self.sys.m1.dot_vec(v);
        self.sys.m3.mul_vec_add(-h, z, &mut rhs);
        self.sys.b.mul_vec_add(h, u, &mut rhs);
        self.chol.solve_in_place(&mut rhs);
        for ((zi, vi), &vn) in z.iter_mut().zip(v.iter_mut()).zip(&rhs) {
            *vi = vn;
            *zi += h * vn;
        }
    }
}

/// Integrates from `x0 = [z0; v0]` and returns the outputs `y_k = C z_k`,
/// `k = 0..f` (r x f) where `f` is the number of input columns.
pub fn simulate_be<T: Scalar>(sys: &DescriptorSystem<T>, h: T, x0: &[T], u: &Array2<T>) -> Result<Array2<T>> {
    let n = sys.n();
    if x0.len() != 2 * n {
        return Err(Error::Dimension(format!("initial state has length {}, expected {}", x0.len(), 2 * n)));
    }
    if u.nrows() != sys.m() {
        return Err(Error::Dimension(format!("input has {} rows, model has {} actuators", u.nrows(), sys.m())));
    }
    let stepper = BackwardEuler::new(sys, h)?;
    let f = u.ncols();
    let (mut z, mut v) = (x0[..n].to_vec(), x0[n..].to_vec());
    let mut y = Array2::zeros((sys.c.nrows(), f));
    let mut yk = vec![T::zero(); sys.c.nrows()];
    for k in 0..f {
        if k > 0 {
            let col: Vec<T> = u.column(k - 1).to_vec();
            stepper.step(&mut z, &mut v, &col);
        }
        sys.c.mul_vec(&z, &mut yk);
        for (i, &val) in yk.iter().enumerate() {
            y[[i, k]] = val;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub input_std: f64,
    pub init_std: f64,
    /// Variance ratio of the added measurement noise, if any.
    pub snr: Option<f64>,
    pub noise_seed: Option<u64>,
    pub model_hash: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub h: T,
    /// m x f
    pub u: Array2<T>,
    /// l x f
    pub q: Array2<T>,
    pub q_clean: Option<Array2<T>>,
    pub meta: TrajectoryMeta,
}

impl<T: Scalar> Trajectory<T> {
    /// Wraps externally produced sequences (e.g. measured data).
    pub fn from_sequences(h: T, u: Array2<T>, q: Array2<T>) -> Result<Self> {
        if u.ncols() != q.ncols() {
            return Err(Error::Dimension(format!("{} input samples vs {} output samples", u.ncols(), q.ncols())));
        }
        if !(h > T::zero()) {
            return Err(Error::param("h", "time step must be positive"));
        }
        Ok(Self {
            h,
            u,
            q,
            q_clean: None,
            meta: TrajectoryMeta {
                seed: 0,
                input_std: 0.0,
                init_std: 0.0,
                snr: None,
                noise_seed: None,
                model_hash: None,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn l(&self) -> usize {
        self.q.nrows()
    }

    pub fn with_noise(&self, snr: T, seed: u64) -> Result<Self> {
        let noisy = add_measurement_noise(&self.q, snr, seed)?;
        let mut meta = self.meta.clone();
        meta.snr = Some(snr.as_f64());
        meta.noise_seed = Some(seed);
        Ok(Self {
            h: self.h,
            u: self.u.clone(),
            q_clean: Some(self.q.clone()),
            q: noisy,
            meta,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetParams<T> {
    pub h: T,
    pub f: usize,
    pub seed: u64,
    pub input_std: T,
    pub init_std: T,
}

/// White Gaussian forces and initial displacements, simulated and projected
/// onto the Zernike modes.
pub fn generate_dataset<T: Scalar>(model: &SecondOrderModel<T>, zmap: &ZernikeMap<T>, params: DatasetParams<T>) -> Result<Trajectory<T>> {
    if params.f < 2 {
        return Err(Error::param("f", "need at least two samples"));
    }
    if !(params.input_std >= T::zero()) || !(params.init_std >= T::zero()) {
        return Err(Error::param("input_std", "standard deviations must be non-negative"));
    }
    if zmap.r() != model.r() {
        return Err(Error::Dimension(format!("Zernike map samples {} points, model observes {}", zmap.r(), model.r())));
    }
    let (n, m, f) = (model.n(), model.m(), params.f);
    let mut input_rng = rng::stream(params.seed, rng::tag::INPUT);
    let mut u = Array2::zeros((m, f));
    for k in 0..f {
        for j in 0..m {
            u[[j, k]] = rng::normal(&mut input_rng, params.input_std);
        }
    }
    let mut init_rng = rng::stream(params.seed, rng::tag::INITIAL_STATE);
    let mut x0 = rng::normal_vec(&mut init_rng, n, params.init_std);
    x0.resize(2 * n, T::zero());

    let sys = to_descriptor(model)?;
    let y = simulate_be(&sys, params.h, &x0, &u)?;
    let q = zmap.c1.dot(&y);
    Ok(Trajectory {
        h: params.h,
        u,
        q,
        q_clean: None,
        meta: TrajectoryMeta {
            seed: params.seed,
            input_std: params.input_std.as_f64(),
            init_std: params.init_std.as_f64(),
            snr: None,
            noise_seed: None,
            model_hash: None,
        },
    })
}

/// Adds per-channel white noise with `σ_j = std(Q_j) / √snr`.
pub fn add_measurement_noise<T: Scalar>(q: &Array2<T>, snr: T, seed: u64) -> Result<Array2<T>> {
    if !(snr > T::zero()) {
        return Err(Error::param("snr", "must be positive"));
    }
    let mut rng = rng::stream(seed, rng::tag::NOISE);
    let mut out = q.clone();
    let f = T::from_usize_lossy(q.ncols());
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let mean = row.iter().copied().sum::<T>() / f;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / f;
        let sigma = (var / snr).sqrt();
        if sigma == T::zero() {
            log::warn!("output channel {j} has zero variance; no noise added");
        }
        for v in row.iter_mut() {
            *v += rng::normal(&mut rng, sigma);
        }
    }
    Ok(out)
}

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulate::Trajectory;

/// Lagged regressors. Row `k - p` holds
/// `[q_{k-1}ᵀ .. q_{k-p}ᵀ, u_{k-1}ᵀ .. u_{k-p}ᵀ]` with target `q_kᵀ`.
#[derive(Debug, Clone)]
pub struct RegressionSet<T> {
    /// (f-p) x p(l+m)
    pub phi: Array2<T>,
    /// (f-p) x l
    pub t: Array2<T>,
    pub p: usize,
    pub l: usize,
    pub m: usize,
}

impl<T: Scalar> RegressionSet<T> {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn width(&self) -> usize {
        self.phi.ncols()
    }
}

pub fn regressor_width(p: usize, l: usize, m: usize) -> usize {
    p * (l + m)
}

/// Fills `row` with the regressor for step `k` (requires `k >= p`), reading
/// past outputs from `q` (l x f) and past inputs from `u` (m x f).
pub(crate) fn fill_regressor<T: Scalar>(q: &Array2<T>, u: &Array2<T>, k: usize, p: usize, row: &mut [T]) {
    let (l, m) = (q.nrows(), u.nrows());
    for i in 1..=p {
        for j in 0..l {
            row[(i - 1) * l + j] = q[[j, k - i]];
        }
        for j in 0..m {
            row[p * l + (i - 1) * m + j] = u[[j, k - i]];
        }
    }
}

pub fn build_regressors<T: Scalar>(traj: &Trajectory<T>, p: usize) -> Result<RegressionSet<T>> {
    regressors_from(&traj.q, &traj.u, p)
}

pub(crate) fn regressors_from<T: Scalar>(q: &Array2<T>, u: &Array2<T>, p: usize) -> Result<RegressionSet<T>> {
    let f = q.ncols();
    if u.ncols() != f {
        return Err(Error::Dimension(format!("{} input samples vs {f} output samples", u.ncols())));
    }
    if p < 1 || p >= f {
        return Err(Error::param("p", format!("past window must satisfy 1 <= p < f = {f}, got {p}")));
    }
    let (l, m) = (q.nrows(), u.nrows());
    let rows = f - p;
    let mut phi = Array2::zeros((rows, regressor_width(p, l, m)));
    let mut t = Array2::zeros((rows, l));
    let mut buf = vec![T::zero(); phi.ncols()];
    for k in p..f {
        fill_regressor(q, u, k, p, &mut buf);
        phi.row_mut(k - p).iter_mut().zip(&buf).for_each(|(d, &s)| *d = s);
        for j in 0..l {
            t[[k - p, j]] = q[[j, k]];
        }
    }
    Ok(RegressionSet { phi, t, p, l, m })
}

/// Per-channel RMS scale factors estimated on training data. The VARX has
/// no intercept, so data are scaled but not centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling<T> {
    pub output_scale: Vec<T>,
    pub input_scale: Vec<T>,
}

fn rms_rows<T: Scalar>(a: &Array2<T>) -> Vec<T> {
    let f = T::from_usize_lossy(a.ncols().max(1));
    a.rows()
        .into_iter()
        .map(|row| {
            let s = (row.iter().map(|&v| v * v).sum::<T>() / f).sqrt();
            if s > T::zero() && s.is_finite() {
                s
            } else {
                T::one()
            }
        })
        .collect()
}

impl<T: Scalar> Scaling<T> {
    pub fn identity(l: usize, m: usize) -> Self {
        Self {
            output_scale: vec![T::one(); l],
            input_scale: vec![T::one(); m],
        }
    }

    pub fn fit(traj: &Trajectory<T>) -> Self {
        Self {
            output_scale: rms_rows(&traj.q),
            input_scale: rms_rows(&traj.u),
        }
    }

    pub fn l(&self) -> usize {
        self.output_scale.len()
    }

    pub fn m(&self) -> usize {
        self.input_scale.len()
    }

    /// Scale of each regressor column for window `p`.
    pub fn regressor_scale(&self, p: usize) -> Array1<T> {
        let mut s = Vec::with_capacity(regressor_width(p, self.l(), self.m()));
        for _ in 0..p {
            s.extend_from_slice(&self.output_scale);
        }
        for _ in 0..p {
            s.extend_from_slice(&self.input_scale);
        }
        Array1::from(s)
    }

    /// Regression set in scaled units.
    pub fn scale_set(&self, reg: &RegressionSet<T>) -> RegressionSet<T> {
        let rs = self.regressor_scale(reg.p);
        let os = Array1::from(self.output_scale.clone());
        RegressionSet {
            phi: &reg.phi / &rs,
            t: &reg.t / &os,
            ..reg.clone()
        }
    }
}

use ndarray::{s, Array2};

use super::predict::Predictor;
use super::regression::{regressor_width, RegressionSet, Scaling};
use crate::error::{Error, Result};
use crate::linalg::HouseholderQr;
use crate::scalar::Scalar;

/// `q_k = Σ_i Q_i q_{k-i} + Σ_i U_i u_{k-i}`, no intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct VarxModel<T> {
    pub p: usize,
    /// `Q_1 .. Q_p`, each l x l
    pub q_coef: Vec<Array2<T>>,
    /// `U_1 .. U_p`, each l x m
    pub u_coef: Vec<Array2<T>>,
}

impl<T: Scalar> VarxModel<T> {
    pub fn zeros(p: usize, l: usize, m: usize) -> Self {
        Self {
            p,
            q_coef: vec![Array2::zeros((l, l)); p],
            u_coef: vec![Array2::zeros((l, m)); p],
        }
    }

    /// Splits a stacked coefficient matrix `W` (p(l+m) x l, so that
    /// `q̂ᵀ = φᵀ W`) into lag banks.
    pub fn from_weight_matrix(w: &Array2<T>, p: usize, l: usize, m: usize) -> Result<Self> {
        if w.dim() != (regressor_width(p, l, m), l) {
            return Err(Error::Dimension(format!("coefficient matrix {:?} does not match p={p}, l={l}, m={m}", w.dim())));
        }
        let q_coef = (0..p).map(|i| w.slice(s![i * l..(i + 1) * l, ..]).t().to_owned()).collect();
        let u_coef = (0..p).map(|i| w.slice(s![p * l + i * m..p * l + (i + 1) * m, ..]).t().to_owned()).collect();
        Ok(Self { p, q_coef, u_coef })
    }

    pub fn weight_matrix(&self) -> Array2<T> {
        let (l, m, p) = (self.l(), self.m(), self.p);
        let mut w = Array2::zeros((regressor_width(p, l, m), l));
        for i in 0..p {
            w.slice_mut(s![i * l..(i + 1) * l, ..]).assign(&self.q_coef[i].t());
            w.slice_mut(s![p * l + i * m..p * l + (i + 1) * m, ..]).assign(&self.u_coef[i].t());
        }
        w
    }

    pub fn l(&self) -> usize {
        self.q_coef.first().map_or(0, |q| q.nrows())
    }

    pub fn m(&self) -> usize {
        self.u_coef.first().map_or(0, |u| u.ncols())
    }
}

impl<T: Scalar> Predictor<T> for VarxModel<T> {
    fn p(&self) -> usize {
        self.p
    }
    fn l(&self) -> usize {
        VarxModel::l(self)
    }
    fn m(&self) -> usize {
        VarxModel::m(self)
    }
    fn predict(&self, phi: &Array2<T>) -> Array2<T> {
        phi.dot(&self.weight_matrix())
    }
    fn num_params(&self) -> usize {
        self.p * self.l() * (self.l() + self.m())
    }
}

/// Coefficients minimizing `||Φ W - T||² + ridge ||W||²` via Householder QR.
pub fn fit_varx<T: Scalar>(reg: &RegressionSet<T>, ridge: T) -> Result<VarxModel<T>> {
    let w = solve_ridge(&reg.phi, &reg.t, ridge)?;
    VarxModel::from_weight_matrix(&w, reg.p, reg.l, reg.m)
}

/// Same as [`fit_varx`] but fit in RMS-scaled units (ridge acts there), with
/// coefficients mapped back to physical units.
pub fn fit_varx_scaled<T: Scalar>(reg: &RegressionSet<T>, scaling: &Scaling<T>, ridge: T) -> Result<VarxModel<T>> {
    let scaled = scaling.scale_set(reg);
    let mut w = solve_ridge(&scaled.phi, &scaled.t, ridge)?;
    let rs = scaling.regressor_scale(reg.p);
    for ((c, j), v) in w.indexed_iter_mut() {
        *v = *v * scaling.output_scale[j] / rs[c];
    }
    VarxModel::from_weight_matrix(&w, reg.p, reg.l, reg.m)
}

fn solve_ridge<T: Scalar>(phi: &Array2<T>, t: &Array2<T>, ridge: T) -> Result<Array2<T>> {
    if !(ridge >= T::zero()) {
        return Err(Error::param("ridge", "must be non-negative"));
    }
    let (rows, cols) = phi.dim();
    if ridge == T::zero() {
        if rows < cols {
            return Err(Error::RankDeficient { rank: rows, cols });
        }
        let qr = HouseholderQr::new(phi.view())?;
        return qr.solve_least_squares_matrix(t.view());
    }
    let mut a = Array2::zeros((rows + cols, cols));
    a.slice_mut(s![..rows, ..]).assign(phi);
    let sq = ridge.sqrt();
    for j in 0..cols {
        a[[rows + j, j]] = sq;
    }
    let mut b = Array2::zeros((rows + cols, t.ncols()));
    b.slice_mut(s![..rows, ..]).assign(t);
    HouseholderQr::new(a.view())?.solve_least_squares_matrix(b.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::regression::regressors_from;

    #[test]
    fn weight_matrix_round_trip() {
        let (p, l, m) = (2, 2, 3);
        let w = Array2::from_shape_fn((regressor_width(p, l, m), l), |(i, j)| (i * 7 + j) as f64);
        let model = VarxModel::from_weight_matrix(&w, p, l, m).unwrap();
        assert_eq!(model.weight_matrix(), w);
        // U_2 row 1 is column 1 of the second input block
        assert_eq!(model.u_coef[1][[1, 0]], w[[p * l + m, 1]]);
        assert_eq!(model.num_params(), w.len());
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let u = Array2::from_shape_fn((2, 50), |(i, k)| ((i + 3 * k) as f64).sin());
        let q = Array2::zeros((1, 50));
        let reg = regressors_from(&q, &u, 2).unwrap();
        let model = fit_varx(&reg, 1e-3).unwrap();
        assert!(model.weight_matrix().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rank_deficiency_needs_ridge() {
        // q ≡ 0 makes the output columns vanish
        let u = Array2::from_shape_fn((1, 30), |(_, k)| (k as f64).cos());
        let q = Array2::zeros((1, 30));
        let reg = regressors_from(&q, &u, 2).unwrap();
        assert!(matches!(fit_varx(&reg, 0.0), Err(Error::RankDeficient { .. })));
        assert!(fit_varx(&reg, 1e-6).is_ok());
    }
}

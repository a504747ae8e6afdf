use ndarray::{s, Array2};

use super::regression::{fill_regressor, regressor_width, regressors_from};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulate::Trajectory;

/// A one-step predictor over the lagged-regressor layout.
pub trait Predictor<T: Scalar>: Sync {
    fn p(&self) -> usize;
    fn l(&self) -> usize;
    fn m(&self) -> usize;
    /// One-step predictions (rows x l) for physical-unit regressor rows.
    fn predict(&self, phi: &Array2<T>) -> Array2<T>;
    /// Trainable parameter count.
    fn num_params(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct Prediction<T> {
    /// l x f; the first `p` columns repeat the measured outputs
    pub q_hat: Array2<T>,
    /// `||q - q̂|| / ||q||` over `k = p..f`
    pub eps: T,
    /// Open loop only: a prediction became non-finite (`eps` is then `∞`).
    pub diverged: bool,
}

impl<T: Scalar> Prediction<T> {
    /// `q_k - q̂_k` for `k = p..f`, one row per step ((f-p) x l).
    pub fn residuals(&self, q: &Array2<T>, p: usize) -> Array2<T> {
        (&q.slice(s![.., p..]) - &self.q_hat.slice(s![.., p..])).t().to_owned()
    }
}

fn check<T: Scalar, P: Predictor<T> + ?Sized>(model: &P, traj: &Trajectory<T>) -> Result<()> {
    if traj.l() != model.l() || traj.m() != model.m() {
        return Err(Error::Dimension(format!(
            "predictor expects l={}, m={}; trajectory has l={}, m={}",
            model.l(),
            model.m(),
            traj.l(),
            traj.m()
        )));
    }
    if traj.len() <= model.p() {
        return Err(Error::param("trajectory", format!("needs more than p = {} samples", model.p())));
    }
    Ok(())
}

/// Relative error over the predicted horizon.
pub fn relative_error<T: Scalar>(q: &Array2<T>, q_hat: &Array2<T>, p: usize) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for (a, b) in q.slice(s![.., p..]).iter().zip(q_hat.slice(s![.., p..]).iter()) {
        num += (*a - *b) * (*a - *b);
        den += *a * *a;
    }
    if den == T::zero() {
        if num == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        (num / den).sqrt()
    }
}

/// One-step predictions from measured past outputs.
pub fn predict_closed_loop<T: Scalar, P: Predictor<T> + ?Sized>(model: &P, traj: &Trajectory<T>) -> Result<Prediction<T>> {
    check(model, traj)?;
    let p = model.p();
    let reg = regressors_from(&traj.q, &traj.u, p)?;
    let pred = model.predict(&reg.phi);
    let mut q_hat = traj.q.clone();
    q_hat.slice_mut(s![.., p..]).assign(&pred.t());
    let eps = relative_error(&traj.q, &q_hat, p);
    Ok(Prediction { q_hat, eps, diverged: false })
}

/// Free-run simulation seeded with the first `p` measured outputs and fed
/// back with its own predictions.
pub fn predict_open_loop<T: Scalar, P: Predictor<T> + ?Sized>(model: &P, traj: &Trajectory<T>) -> Result<Prediction<T>> {
    check(model, traj)?;
    let (p, l, f) = (model.p(), model.l(), traj.len());
    let mut q_hat = Array2::zeros((l, f));
    q_hat.slice_mut(s![.., ..p]).assign(&traj.q.slice(s![.., ..p]));
    let mut row = Array2::zeros((1, regressor_width(p, l, model.m())));
    let mut diverged = false;
    for k in p..f {
        fill_regressor(&q_hat, &traj.u, k, p, row.as_slice_mut().expect("contiguous"));
        let next = model.predict(&row);
        for j in 0..l {
            q_hat[[j, k]] = next[[0, j]];
        }
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
    }
    let eps = if diverged { T::infinity() } else { relative_error(&traj.q, &q_hat, p) };
    Ok(Prediction { q_hat, eps, diverged })
}

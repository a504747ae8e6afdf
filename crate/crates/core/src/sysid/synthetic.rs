use ndarray::Array2;

use super::predict::Predictor;
use super::varx::VarxModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::simulate::Trajectory;

/// Random stable VARX(p0) coefficients. The output banks are scaled so that
/// `Σ_i ||Q_i||_∞ = 0.8`, which bounds the companion spectral radius below 1.
pub fn random_stable_varx<T: Scalar>(p0: usize, l: usize, m: usize, seed: u64) -> Result<VarxModel<T>> {
    if p0 < 1 || l < 1 {
        return Err(Error::param("p", "need p >= 1 and l >= 1"));
    }
    let mut g = rng::stream(seed, rng::tag::SYNTHETIC);
    let mut model = VarxModel::zeros(p0, l, m);
    for q in &mut model.q_coef {
        q.mapv_inplace(|_| rng::normal(&mut g, T::one()));
    }
    for u in &mut model.u_coef {
        u.mapv_inplace(|_| rng::normal(&mut g, T::one()));
    }
    let inf_norm = |a: &Array2<T>| a.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<T>()).fold(T::zero(), T::max);
    let total: T = model.q_coef.iter().map(inf_norm).sum();
    if total > T::zero() {
        let s = T::lit(0.8) / total;
        model.q_coef.iter_mut().for_each(|q| q.mapv_inplace(|v| v * s));
    }
    Ok(model)
}

/// Drives `model` with white unit-variance inputs plus white innovations of
/// standard deviation `noise_std`, from zero initial outputs.
pub fn simulate_varx<T: Scalar>(model: &VarxModel<T>, f: usize, seed: u64, noise_std: T) -> Result<Trajectory<T>> {
    let (p, l, m) = (model.p, Predictor::l(model), Predictor::m(model));
    if f <= p {
        return Err(Error::param("f", "trajectory must be longer than the model order"));
    }
    let mut gu = rng::stream(seed, rng::tag::INPUT);
    let mut ge = rng::stream(seed, rng::tag::NOISE);
    let u = Array2::from_shape_simple_fn((m, f), || rng::normal(&mut gu, T::one()));
    let mut q = Array2::zeros((l, f));
    for k in 1..f {
        for j in 0..l {
            let mut acc = rng::normal(&mut ge, noise_std);
            for i in 1..=p.min(k) {
                for c in 0..l {
                    acc += model.q_coef[i - 1][[j, c]] * q[[c, k - i]];
                }
                for c in 0..m {
                    acc += model.u_coef[i - 1][[j, c]] * u[[c, k - i]];
                }
            }
            q[[j, k]] = acc;
        }
    }
    let mut traj = Trajectory::from_sequences(T::one(), u, q)?;
    traj.meta.seed = seed;
    traj.meta.input_std = 1.0;
    Ok(traj)
}

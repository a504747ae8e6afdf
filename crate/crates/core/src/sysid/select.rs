use ndarray::Array2;
use rayon::prelude::*;

use super::network::{init_network, train_network, TrainConfig, TrainHistory};
use super::predict::{predict_closed_loop, predict_open_loop, Predictor};
use super::regression::{build_regressors, Scaling};
use super::varx::fit_varx_scaled;
use crate::error::{Error, Result};
use crate::linalg::HouseholderQr;
use crate::scalar::Scalar;
use crate::simulate::Trajectory;

/// `N ln det Σ̂ + 2k` with `Σ̂ = RᵀR / N` for residual rows `R` (N x l).
pub fn compute_aic<T: Scalar>(residuals: &Array2<T>, num_params: usize) -> Result<T> {
    let (n, l) = residuals.dim();
    if n <= l {
        return Err(Error::SingularCovariance);
    }
    // det(RᵀR) = Π R_kk² from a QR of the residuals
    let qr = HouseholderQr::new(residuals.view())?;
    if !qr.is_full_rank() {
        return Err(Error::SingularCovariance);
    }
    let nn = T::from_usize_lossy(n);
    let log_det = qr.r_diagonal().iter().map(|&d| (d * d).ln()).sum::<T>() - T::from_usize_lossy(l) * nn.ln();
    if !log_det.is_finite() {
        return Err(Error::SingularCovariance);
    }
    Ok(nn * log_det + T::lit(2.0) * T::from_usize_lossy(num_params))
}

#[derive(Debug, Clone)]
pub struct Whiteness<T> {
    /// l x max_lag; column `τ-1` holds lag `τ`
    pub acf: Array2<T>,
    /// `1.96 / √N`
    pub bound: T,
    pub outside_fraction: T,
}

/// Sample autocorrelation of each residual channel (columns of `residuals`)
/// and the share of `(channel, lag)` pairs outside the 95% white-noise band.
pub fn residual_whiteness<T: Scalar>(residuals: &Array2<T>, max_lag: usize) -> Result<Whiteness<T>> {
    let (n, l) = residuals.dim();
    if max_lag < 1 || 4 * max_lag >= n {
        return Err(Error::param("max_lag", format!("need 1 <= max_lag < N/4 = {}", n / 4)));
    }
    let nn = T::from_usize_lossy(n);
    let bound = T::lit(1.96) / nn.sqrt();
    let mut acf = Array2::zeros((l, max_lag));
    let mut outside = 0usize;
    for j in 0..l {
        let col = residuals.column(j);
        let mean = col.sum() / nn;
        let c: Vec<T> = col.iter().map(|&v| v - mean).collect();
        let c0: T = c.iter().map(|&v| v * v).sum();
        if !(c0 > T::zero()) {
            return Err(Error::ConstantChannel(j));
        }
        for tau in 1..=max_lag {
            let r = c[..n - tau].iter().zip(&c[tau..]).map(|(&a, &b)| a * b).sum::<T>() / c0;
            acf[[j, tau - 1]] = r;
            if r.abs() > bound {
                outside += 1;
            }
        }
    }
    Ok(Whiteness {
        acf,
        bound,
        outside_fraction: T::from_usize_lossy(outside) / T::from_usize_lossy(l * max_lag),
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Estimator<T> {
    /// Direct least squares in scaled units.
    Varx { ridge: T },
    Network { width: usize, depth: usize, seed: u64, train: TrainConfig<T> },
}

#[derive(Debug, Clone, Copy)]
pub struct SelectConfig<T> {
    pub estimator: Estimator<T>,
    /// Whiteness lags (capped below N/4).
    pub max_lag: usize,
}

pub struct Datasets<'a, T> {
    pub train: &'a Trajectory<T>,
    pub val: &'a Trajectory<T>,
    pub test: &'a Trajectory<T>,
}

/// A fitted predictor of either class.
#[derive(Debug, Clone)]
pub enum FittedModel<T> {
    Varx(super::varx::VarxModel<T>),
    Network(super::network::NetworkModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn as_predictor(&self) -> &dyn Predictor<T> {
        match self {
            FittedModel::Varx(v) => v,
            FittedModel::Network(n) => n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T> {
    pub p: usize,
    pub num_params: usize,
    /// Test set.
    pub eps_cl: T,
    /// Test set; `∞` if the free run diverged.
    pub eps_ol: T,
    /// Validation set, used for open-loop selection.
    pub eps_ol_val: T,
    pub eps_cl_val: T,
    /// From closed-loop training residuals; `None` if `Σ̂` is singular.
    pub aic: Option<T>,
    pub history: TrainHistory<T>,
    /// Test closed-loop residuals; `None` if a channel is constant.
    pub whiteness: Option<Whiteness<T>>,
    pub ol_diverged: bool,
}

impl<T: Scalar> FitReport<T> {
    pub fn outside_fraction(&self) -> Option<T> {
        self.whiteness.as_ref().map(|w| w.outside_fraction)
    }
}

/// Fits one model of window `p` and evaluates it.
pub fn fit_and_evaluate<T: Scalar>(data: &Datasets<'_, T>, p: usize, config: &SelectConfig<T>) -> Result<(FittedModel<T>, FitReport<T>)> {
    let train = build_regressors(data.train, p)?;
    let scaling = Scaling::fit(data.train);
    let (model, history) = match config.estimator {
        Estimator::Varx { ridge } => (FittedModel::Varx(fit_varx_scaled(&train, &scaling, ridge)?), TrainHistory::default()),
        Estimator::Network { width, depth, seed, train: cfg } => {
            let val = build_regressors(data.val, p)?;
            let net = init_network(p, train.l, train.m, width, depth, per_window_seed(seed, p))?.with_scaling(scaling);
            let (best, hist) = train_network(&net, &train, &val, &cfg)?;
            (FittedModel::Network(best), hist)
        }
    };
    let pred = model.as_predictor();
    let num_params = pred.num_params();

    let train_cl = predict_closed_loop(pred, data.train)?;
    let aic = compute_aic(&train_cl.residuals(&data.train.q, p), num_params).ok();
    let val_cl = predict_closed_loop(pred, data.val)?;
    let val_ol = predict_open_loop(pred, data.val)?;
    let test_cl = predict_closed_loop(pred, data.test)?;
    let test_ol = predict_open_loop(pred, data.test)?;
    let resid = test_cl.residuals(&data.test.q, p);
    let max_lag = config.max_lag.min(resid.nrows().saturating_sub(1) / 4);
    let whiteness = residual_whiteness(&resid, max_lag).ok();
    let report = FitReport {
        p,
        num_params,
        eps_cl: test_cl.eps,
        eps_ol: test_ol.eps,
        eps_ol_val: val_ol.eps,
        eps_cl_val: val_cl.eps,
        aic,
        history,
        whiteness,
        ol_diverged: test_ol.diverged || val_ol.diverged,
    };
    Ok((model, report))
}

/// Weight seed for window `p`, independent of evaluation order.
pub fn per_window_seed(seed: u64, p: usize) -> u64 {
    seed ^ (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub reports: Vec<FitReport<T>>,
    pub models: Vec<FittedModel<T>>,
    /// `None` when no candidate had a finite AIC.
    pub p_aic: Option<usize>,
    pub p_ol: usize,
}

fn argmin_smallest_p<T: Scalar>(items: impl Iterator<Item = (usize, T)>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (p, v) in items {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((bp, bv)) if v > bv || (v == bv && p > bp) => {}
            _ => best = Some((p, v)),
        }
    }
    best.map(|(p, _)| p)
}

/// One model per candidate window; winners by AIC and by validation
/// open-loop error, ties going to the smaller window.
pub fn select_order<T: Scalar>(data: &Datasets<'_, T>, p_grid: &[usize], config: &SelectConfig<T>) -> Result<Selection<T>> {
    if p_grid.is_empty() {
        return Err(Error::param("p_grid", "candidate list is empty"));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let fitted: Vec<(FittedModel<T>, FitReport<T>)> = grid.par_iter().map(|&p| fit_and_evaluate(data, p, config)).collect::<Result<_>>()?;
    let (models, reports): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let p_aic = argmin_smallest_p(reports.iter().filter_map(|r| r.aic.map(|a| (r.p, a))));
    let p_ol = argmin_smallest_p(reports.iter().map(|r| (r.p, r.eps_ol_val))).unwrap_or(grid[0]);
    Ok(Selection {
        reports,
        models,
        p_aic,
        p_ol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn aic_of_identity_covariance() {
        // orthogonal columns with unit mean square
        let n = 100;
        let r = Array2::from_shape_fn((n, 2), |(k, j)| match j {
            0 if k % 2 == 0 => 1.0,
            0 => -1.0,
            _ if k < n / 2 => 1.0,
            _ => -1.0,
        });
        let aic = compute_aic(&r, 7).unwrap();
        let cov = r.t().dot(&r) / n as f64;
        assert!((cov[[0, 1]]).abs() < 1e-12, "{cov}");
        assert!((aic - 14.0).abs() < 1e-9, "{aic}");
        let scaled = compute_aic(&(&r * 3.0), 7).unwrap();
        assert!((scaled - aic - (n * 2) as f64 * 9f64.ln()).abs() < 1e-8);
        assert!(matches!(compute_aic(&Array2::<f64>::zeros((10, 2)), 1), Err(Error::SingularCovariance)));
    }

    #[test]
    fn whiteness_of_noise_and_ar1() {
        let n = 3985;
        let mut g = rng::stream(11, "test");
        let white: Array2<f64> = Array2::from_shape_simple_fn((n, 4), || rng::normal(&mut g, 1.0));
        let w = residual_whiteness(&white, 100).unwrap();
        assert!((w.bound - 0.03105).abs() < 1e-5);
        assert!((w.outside_fraction - 0.05).abs() <= 0.02, "{}", w.outside_fraction);
        let mut ar: Array2<f64> = Array2::zeros((n, 1));
        for k in 1..n {
            ar[[k, 0]] = 0.9 * ar[[k - 1, 0]] + rng::normal(&mut g, 1.0);
        }
        assert!(residual_whiteness(&ar, 100).unwrap().outside_fraction > 0.5);
        assert!(residual_whiteness(&ar, 1000).is_err());
        let constant = Array2::from_elem((400, 1), 2.0);
        assert!(matches!(residual_whiteness(&constant, 10), Err(Error::ConstantChannel(0))));
    }

    #[test]
    fn ties_prefer_smaller_window() {
        assert_eq!(argmin_smallest_p([(3, 1.0), (1, 1.0), (2, 2.0)].into_iter()), Some(1));
        assert_eq!(argmin_smallest_p([(3, f64::INFINITY), (4, 0.5)].into_iter()), Some(4));
        assert_eq!(argmin_smallest_p(std::iter::empty::<(usize, f64)>()), None);
    }
}

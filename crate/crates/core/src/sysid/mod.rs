//! VARX-structured identification: lagged regressors, direct least squares,
//! layered linear networks, closed/open-loop prediction, AIC order selection
//! and residual whiteness.

mod network;
mod predict;
mod regression;
mod select;
mod synthetic;
mod varx;

pub use network::{init_network, init_network_with, scaled_mse, train_network, Activation, DenseLayer, NetworkModel, TrainConfig, TrainHistory};
pub use predict::{predict_closed_loop, predict_open_loop, relative_error, Prediction, Predictor};
pub use regression::{build_regressors, regressor_width, RegressionSet, Scaling};
pub use select::{
    compute_aic, fit_and_evaluate, per_window_seed, residual_whiteness, select_order, Datasets, Estimator, FitReport, FittedModel, SelectConfig,
    Selection, Whiteness,
};
pub use synthetic::{random_stable_varx, simulate_varx};
pub use varx::{fit_varx, fit_varx_scaled, VarxModel};

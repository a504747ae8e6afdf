use dm_core::sysid::{
    build_regressors, fit_varx, predict_closed_loop, predict_open_loop, random_stable_varx, regressor_width, residual_whiteness, simulate_varx,
    Predictor,
};
use ndarray::Array2;
use proptest::prelude::*;

#[test]
fn noise_free_data_gives_back_the_generator() {
    let truth = random_stable_varx::<f64>(3, 2, 2, 4).unwrap();
    let traj = simulate_varx(&truth, 500, 8, 0.0).unwrap();
    let fit = fit_varx(&build_regressors(&traj, 3).unwrap(), 0.0).unwrap();
    let diff = (&fit.weight_matrix() - &truth.weight_matrix()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    assert!(diff < 1e-8, "max coefficient error {diff:e}");
    let ol = predict_open_loop(&truth, &traj).unwrap();
    let cl = predict_closed_loop(&truth, &traj).unwrap();
    assert!(ol.residuals(&traj.q, 3).iter().all(|v| v.abs() < 1e-10));
    assert!(cl.residuals(&traj.q, 3).iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn white_noise_stays_inside_the_band() {
    let mut rng = dm_core::rng::stream(1, "white");
    let e = Array2::from_shape_vec((4000, 3), dm_core::rng::normal_vec::<f64, _>(&mut rng, 12000, 1.0)).unwrap();
    let w = residual_whiteness(&e, 100).unwrap();
    assert!(w.outside_fraction < 0.1, "{}", w.outside_fraction);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regressor_layout(p in 1usize..5, l in 1usize..4, m in 1usize..4, f in 10usize..40) {
        let truth = random_stable_varx::<f64>(1, l, m, 3).unwrap();
        let traj = simulate_varx(&truth, f, 2, 1.0).unwrap();
        let reg = build_regressors(&traj, p).unwrap();
        prop_assert_eq!(reg.width(), regressor_width(p, l, m));
        prop_assert_eq!(reg.rows(), f - p);
        // row for step k: q_{k-1}..q_{k-p} then u_{k-1}..u_{k-p}
        let k = p;
        for i in 0..p {
            for c in 0..l {
                prop_assert_eq!(reg.phi[[0, i * l + c]], traj.q[[c, k - 1 - i]]);
            }
            for c in 0..m {
                prop_assert_eq!(reg.phi[[0, p * l + i * m + c]], traj.u[[c, k - 1 - i]]);
            }
        }
    }

    #[test]
    fn synthetic_generators_are_stable_and_sized(p in 1usize..5, l in 1usize..4, m in 1usize..4, seed in any::<u64>()) {
        let v = random_stable_varx::<f64>(p, l, m, seed).unwrap();
        prop_assert_eq!((v.p(), v.l(), v.m()), (p, l, m));
        let traj = simulate_varx(&v, 2000, seed, 0.0).unwrap();
        prop_assert!(traj.q.iter().all(|x| x.is_finite() && x.abs() < 1e6));
    }
}

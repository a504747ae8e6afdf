//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use dm_core::linalg::EnvelopeCholesky;
use dm_core::plate_model::{assemble_bending_stiffness, assemble_model, build_grid, build_layout, ActuatorParams, BoundaryMode, MaterialParams, RayleighDamping};
use dm_core::rng;
use dm_core::scalar::norm2;
use dm_core::simulate::{generate_dataset, to_descriptor, BackwardEuler, DatasetParams};
use dm_core::steady_state::{apply_control, assemble_augmented, solve_steady_state, sweep_modes, SolverParams};
use dm_core::sysid::{
    build_regressors, fit_and_evaluate, fit_varx_scaled, random_stable_varx, scaled_mse, select_order, simulate_varx, Datasets, Estimator, Scaling,
    SelectConfig, TrainConfig,
};
use dm_core::zernike::{synthesize_target, ModeIndex, ZernikeMap};
use dm_core::{Model, Traj};
use nalgebra::DMatrix;

const H: f64 = 1e-3;
const OBS_RADIUS: f64 = 0.6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn model(node_pitch: f64, act_pitch: f64, inclusion: f64) -> Model {
    let mat = MaterialParams::zerodur();
    let grid = build_grid(&mat, node_pitch, BoundaryMode::Free).unwrap();
    let act = ActuatorParams {
        inclusion_radius: inclusion,
        ..ActuatorParams::with_pitch(act_pitch)
    };
    let layout = build_layout(&act).unwrap();
    assemble_model(&grid, &mat, &act, &layout, OBS_RADIUS, RayleighDamping::default()).unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b)
}

fn modes(labels: &[&str]) -> Vec<ModeIndex> {
    labels.iter().map(|s| s.parse().unwrap()).collect()
}

/// Steady-state forces against a dense SVD pseudo-inverse of the
/// column-equilibrated augmented matrix.
fn steady_state_oracle() -> Outcome {
    let model = model(0.25, 0.5, 0.6);
    let (n, m) = (model.n(), model.m());
    let points = model.observation_points();
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for mode in modes(&["Z2^0", "Z2^2", "Z3^1", "Z3^3"]) {
        let y_d = synthesize_target(mode, 1e-6, &points, OBS_RADIUS).unwrap();
        let t = Instant::now();
        let aug = assemble_augmented(&model, &y_d).unwrap();
        let sol = solve_steady_state(&aug, SolverParams::default()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());

        let s = aug.s.to_dense();
        let d: Vec<f64> = aug.s.column_norms().iter().map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 }).collect();
        let sd = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[[i, j]] * d[j]);
        let pinv = sd.svd(true, true).pseudo_inverse(1e-14).unwrap();
        let x = &pinv * nalgebra::DVector::from_vec(aug.g.clone());
        let u_ref: Vec<f64> = (0..m).map(|j| x[n + j] * d[n + j]).collect();
        worst = worst.max(rel(&sol.u, &u_ref));
    }
    outcome(
        m == 5 && worst <= 1e-8 && slowest < 1.0,
        format!("n={n} m={m}: max relative u-error {worst:.2e} (<= 1e-8), slowest solve {slowest:.3} s (< 1 s)"),
    )
}

fn density_study() -> Outcome {
    let t = Instant::now();
    let labels = ["Z2^0", "Z2^2", "Z3^1", "Z3^3"];
    let sweep = |pitch: f64| {
        let model = model(0.05, pitch, 0.9);
        let zmap = ZernikeMap::with_modes(&model.observation_points(), 4, OBS_RADIUS).unwrap();
        (model.m(), sweep_modes(&model, &zmap, &modes(&labels), 1e-6, SolverParams::default()).unwrap())
    };
    let (m_coarse, coarse) = sweep(0.2);
    let (m_fine, fine) = sweep(0.1);
    let ratios: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f.e / c.e).collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let parts: Vec<String> = coarse
        .iter()
        .zip(&fine)
        .zip(&ratios)
        .map(|((c, f), r)| format!("{} {:.2e}->{:.2e} ({r:.3})", c.mode.label(), c.e, f.e))
        .collect();
    let primary = worst <= 0.1;
    let fallback = worst <= 0.3;
    let verdict = if primary {
        "all ratios <= 0.1"
    } else if fallback {
        "primary 0.1 missed, fallback 0.3 met"
    } else {
        "ratio above 0.3"
    };
    outcome(
        fallback && secs < 600.0,
        format!("m {m_coarse} vs {m_fine}: {}; {verdict}; {secs:.1} s", parts.join(", ")),
    )
}

fn clamped_plate() -> Outcome {
    let mat = MaterialParams::<f64>::zerodur();
    let grid = build_grid(&mat, 0.025, BoundaryMode::Clamped).unwrap();
    let k = assemble_bending_stiffness(&grid, &mat);
    let pressure = 1.0;
    let w = EnvelopeCholesky::factor(&k).unwrap().solve(&grid.uniform_pressure_load(pressure));
    let centre = grid.node_at(0, 0).unwrap();
    let r = mat.plate_radius;
    let exact = pressure * r.powi(4) / (64.0 * mat.flexural_rigidity());
    let ratio = w[centre] / exact;
    outcome((ratio - 1.0).abs() <= 0.05, format!("n={}: w(0)/(pR^4/64D) = {ratio:.4} (within 5%)", grid.len()))
}

/// Slowest time constant of the discrete zero-input map, by power iteration.
fn slowest_time_constant(stepper: &BackwardEuler<'_, f64>, sys: &dm_core::Descriptor, n: usize, m: usize) -> f64 {
    let mut g = rng::stream(5, "time-constant");
    let mut z = rng::normal_vec(&mut g, n, 1.0);
    let mut v = vec![0.0; n];
    let zero = vec![0.0; m];
    let block = 500;
    let mut rate = 0.0;
    for _ in 0..40 {
        let e0 = sys.energy(&z, &v).sqrt();
        for _ in 0..block {
            stepper.step(&mut z, &mut v, &zero);
        }
        let e1 = sys.energy(&z, &v).sqrt();
        rate = (e1 / e0).ln() / block as f64;
        let s = 1.0 / e1;
        z.iter_mut().chain(v.iter_mut()).for_each(|x| *x *= s);
    }
    -H / rate
}

fn dynamics_to_steady_state() -> Outcome {
    let model = model(0.05, 0.2, 0.9);
    let (n, m) = (model.n(), model.m());
    let sys = to_descriptor(&model).unwrap();
    let stepper = BackwardEuler::new(&sys, H).unwrap();
    let tau = slowest_time_constant(&stepper, &sys, n, m);
    let mut g = rng::stream(3, "constant-input");
    let u = rng::normal_vec(&mut g, m, 0.5);
    let y_ref = apply_control(&model, &u).unwrap();
    let steps = (5.0 * tau / H).ceil() as usize;
    let (mut z, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut err_at = BTreeMap::new();
    let checkpoints = [steps, 2 * steps, 3 * steps];
    for k in 1..=checkpoints[2] {
        stepper.step(&mut z, &mut v, &u);
        if checkpoints.contains(&k) {
            err_at.insert(k, rel(&model.c.dot_vec(&z), &y_ref));
        }
    }
    let err = err_at[&steps];
    outcome(
        n <= 3000 && err <= 1e-6,
        format!(
            "n={n}, tau={tau:.4} s, 5 tau = {steps} steps: relative error {err:.2e} (<= 1e-6); at 10 tau {:.2e}, 15 tau {:.2e}",
            err_at[&checkpoints[1]], err_at[&checkpoints[2]]
        ),
    )
}

fn dissipativity() -> Outcome {
    let model = model(0.05, 0.2, 0.9);
    let (n, m) = (model.n(), model.m());
    let sys = to_descriptor(&model).unwrap();
    let stepper = BackwardEuler::new(&sys, H).unwrap();
    let mut g = rng::stream(4, rng::tag::INITIAL_STATE);
    let mut z = rng::normal_vec(&mut g, n, 1e-6);
    let mut v = vec![0.0; n];
    let zero = vec![0.0; m];
    let e0 = sys.energy(&z, &v);
    let mut prev = e0;
    let mut violations = 0;
    for _ in 0..4000 {
        stepper.step(&mut z, &mut v, &zero);
        let e = sys.energy(&z, &v);
        if e > prev {
            violations += 1;
        }
        prev = e;
    }
    outcome(
        violations == 0,
        format!("n={n}, m={m}: {violations} increases in 4000 steps, energy {e0:.3e} -> {prev:.3e}"),
    )
}

/// Train/val/test from seeds 1, 2, 3 on the reduced model.
fn reduced_datasets(snr: Option<f64>) -> (Model, [Traj; 3]) {
    let model = model(0.1, 0.4, 0.9);
    let zmap = ZernikeMap::with_modes(&model.observation_points(), 10, OBS_RADIUS).unwrap();
    let sets: Vec<Traj> = [1u64, 2, 3]
        .iter()
        .map(|&seed| {
            let t = generate_dataset(
                &model,
                &zmap,
                DatasetParams {
                    h: H,
                    f: 4000,
                    seed,
                    input_std: 0.5,
                    init_std: 1e-6,
                },
            )
            .unwrap();
            match snr {
                Some(s) => t.with_noise(s, 100 + seed).unwrap(),
                None => t,
            }
        })
        .collect();
    let [a, b, c]: [Traj; 3] = sets.try_into().unwrap();
    (model, [a, b, c])
}

fn network_estimator(epochs: usize) -> Estimator<f64> {
    Estimator::Network {
        width: 32,
        depth: 2,
        seed: 7,
        train: TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
    }
}

const NOISE_FREE_GRID: [usize; 5] = [5, 10, 15, 20, 25];
const NETWORK_EPOCHS: usize = 20000;
const LS_RIDGE: f64 = 1e-12;

fn identification_noise_free() -> Outcome {
    let t = Instant::now();
    let (model, [train, val, test]) = reduced_datasets(None);
    let data = Datasets {
        train: &train,
        val: &val,
        test: &test,
    };
    let ls_cfg = SelectConfig {
        estimator: Estimator::Varx { ridge: LS_RIDGE },
        max_lag: 100,
    };
    let p = select_order(&data, &NOISE_FREE_GRID, &ls_cfg).unwrap().p_ol;
    let cfg = SelectConfig {
        estimator: network_estimator(NETWORK_EPOCHS),
        max_lag: 100,
    };
    let (net, report) = fit_and_evaluate(&data, p, &cfg).unwrap();
    let reg = build_regressors(&train, p).unwrap();
    let scaling = Scaling::fit(&train);
    let ls = fit_varx_scaled(&reg, &scaling, LS_RIDGE).unwrap();
    let ls_mse = scaled_mse(&ls, &reg, &scaling);
    let net_mse = scaled_mse(net.as_predictor(), &reg, &scaling);
    let (_, ls_report) = fit_and_evaluate(&data, p, &ls_cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let gap = (net_mse - ls_mse).abs() / ls_mse;
    outcome(
        report.eps_ol <= 0.05 && gap <= 0.05 && secs < 900.0,
        format!(
            "n={} m={} l=10 p={p}, {NETWORK_EPOCHS} epochs: network test eps_OL {:.3e} (<= 0.05); train MSE {net_mse:.3e} vs least-squares {ls_mse:.3e}, gap {gap:.2e} (<= 0.05); least-squares eps_OL {:.3e}; {secs:.0} s (< 900 s)",
            model.n(),
            model.m(),
            report.eps_ol,
            ls_report.eps_ol,
        ),
    )
}

const SYNTH_L: usize = 2;
const SYNTH_M: usize = 2;
const SYNTH_NOISE: f64 = 0.1;

fn synthetic_sets(p0: usize) -> [Traj; 3] {
    let truth = random_stable_varx::<f64>(p0, SYNTH_L, SYNTH_M, 11).unwrap();
    let sets: Vec<Traj> = [21u64, 22, 23].iter().map(|&s| simulate_varx(&truth, 4000, s, SYNTH_NOISE).unwrap()).collect();
    sets.try_into().unwrap_or_else(|_| unreachable!())
}

fn known_order() -> Outcome {
    let [train, val, test] = synthetic_sets(3);
    let data = Datasets {
        train: &train,
        val: &val,
        test: &test,
    };
    let cfg = SelectConfig {
        estimator: Estimator::Varx { ridge: 0.0 },
        max_lag: 100,
    };
    let sel = select_order(&data, &(1..=8).collect::<Vec<_>>(), &cfg).unwrap();
    outcome(
        sel.p_aic == Some(3) && sel.p_ol == 3,
        format!("VARX(3), l={SYNTH_L}, m={SYNTH_M}, grid 1..8: AIC picks {:?}, open loop picks {}", sel.p_aic, sel.p_ol),
    )
}

fn whiteness() -> Outcome {
    let (_, [train, val, test]) = reduced_datasets(Some(20.0));
    let noisy = Datasets {
        train: &train,
        val: &val,
        test: &test,
    };
    let p = 5;
    let cfg = SelectConfig {
        estimator: network_estimator(TrainConfig::<f64>::default().epochs),
        max_lag: 100,
    };
    let (_, net) = fit_and_evaluate(&noisy, p, &cfg).unwrap();
    let w = net.whiteness.as_ref().unwrap();
    let frac_noisy = w.outside_fraction;
    let ls_cfg = SelectConfig {
        estimator: Estimator::Varx { ridge: LS_RIDGE },
        max_lag: 100,
    };
    let (_, ls) = fit_and_evaluate(&noisy, p, &ls_cfg).unwrap();

    let [st, sv, ss] = synthetic_sets(3);
    let exact = Datasets {
        train: &st,
        val: &sv,
        test: &ss,
    };
    let (_, fit) = fit_and_evaluate(&exact, 3, &SelectConfig {
        estimator: Estimator::Varx { ridge: 0.0 },
        max_lag: 100,
    })
    .unwrap();
    let frac_exact = fit.outside_fraction().unwrap();
    outcome(
        frac_noisy <= 0.07 && (0.01..=0.10).contains(&frac_exact),
        format!(
            "snr=20, network p={p}: outside fraction {frac_noisy:.4} (<= 0.07, bound {:.4}; least squares {:.4}); known VARX exact fit: {frac_exact:.4} (in [0.01, 0.10])",
            w.bound,
            ls.outside_fraction().unwrap_or(f64::NAN)
        ),
    )
}

fn layout_calibration() -> Outcome {
    let count = build_layout(&ActuatorParams::<f64>::with_pitch(0.2)).unwrap().count();
    outcome(count == 69, format!("pitch 0.2, inclusion 0.9: {count} actuators (== 69)"))
}

fn csv_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let base = serde_json::json!({
        "grid": {"node_pitch": 0.25},
        "actuator": {"pitch": 0.5},
        "observation": {"modes": 3},
        "simulation": {"f": 600, "snr": 20.0},
        "identification": {"p_grid": [1, 2, 3, 4], "epochs": 300},
    });
    let run = |dir: &Path| {
        let over = [format!("output_dir={}", serde_json::to_string(dir).unwrap())];
        let cfg = dm_cli::config::resolve(Some(&base), &over).unwrap();
        dm_cli::commands::cmd_fit(&cfg, None, None).unwrap();
        csv_files(dir)
    };
    let tmp = tempfile::tempdir().unwrap();
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(
        !a.is_empty() && a.len() == b.len() && differing.is_empty(),
        format!("{} CSV files per run, {} differ", a.len(), differing.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("steady-state oracle equivalence", steady_state_oracle),
        ("actuator-density error ratio", density_study),
        ("clamped plate centre deflection", clamped_plate),
        ("dynamics converge to the static response", dynamics_to_steady_state),
        ("zero-input energy is non-increasing", dissipativity),
        ("noise-free identification", identification_noise_free),
        ("known-order recovery", known_order),
        ("residual whiteness", whiteness),
        ("layout calibration", layout_calibration),
        ("identify determinism", determinism),
    ];
    // only criterion names are filtered; `cargo test` passes harness flags too
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let t = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !res.pass {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {} [{:.1} s]", if res.pass { "PASS" } else { "FAIL" }, res.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

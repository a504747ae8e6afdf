//! The subcommands as library functions. Each writes its artifacts under the
//! configured output directory, echoes the resolved config and finishes with
//! a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use dm_core::io::{self, format_float, ModelHeader, TrainingRecord};
use dm_core::plate_model::{assemble_model, build_grid, build_layout};
use dm_core::simulate::{generate_dataset, DatasetParams};
use dm_core::steady_state::{sweep_one, SolverParams, SteadyStateSolver};
use dm_core::sysid::{
    predict_closed_loop, predict_open_loop, residual_whiteness, select_order, Datasets, Estimator, FitReport, FittedModel, Prediction, SelectConfig,
    Selection, TrainConfig, Whiteness,
};
use dm_core::zernike::{ModeIndex, ZernikeMap};
use dm_core::{Model, Traj, ZernikeBasis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use crate::svg;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_file(rec: &mut Recorder, path: PathBuf, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    rec.add(path);
    Ok(())
}

fn echo_config(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let path = rec.root().join("config.resolved.json");
    write_file(rec, path, &cfg.to_pretty_json())
}

pub fn build_model(cfg: &ExperimentConfig) -> CliResult<Model> {
    let grid = build_grid(&cfg.material, cfg.grid.node_pitch, cfg.grid.boundary_mode)?;
    let layout = build_layout(&cfg.actuator)?;
    Ok(assemble_model(&grid, &cfg.material, &cfg.actuator, &layout, cfg.observation.obs_radius, cfg.damping)?)
}

/// Loads `dir` if given, otherwise assembles from the config.
pub fn obtain_model(cfg: &ExperimentConfig, dir: Option<&Path>) -> CliResult<(Model, String)> {
    let model = match dir {
        Some(d) => io::read_model(d)?,
        None => build_model(cfg)?,
    };
    let hash = io::model_hash(&model);
    Ok((model, hash))
}

pub fn zernike_map(cfg: &ExperimentConfig, model: &Model) -> CliResult<ZernikeBasis> {
    Ok(ZernikeMap::with_modes(&model.observation_points(), cfg.observation.modes, cfg.norm_radius())?)
}

// ------------------------------------------------------------ build-model

pub fn cmd_build_model(cfg: &ExperimentConfig, model_out: Option<&Path>) -> CliResult<ModelHeader> {
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let mut rec = Recorder::new(&root, "build-model");
    let model = rec.time("assemble", || build_model(cfg))?;
    let dir = model_out.map(Path::to_path_buf).unwrap_or_else(|| root.join("model"));
    let header = io::write_model(&model, &dir)?;
    for name in header.matrices.iter().map(String::as_str).chain([io::MODEL_HEADER]) {
        rec.add(dir.join(name));
    }
    echo_config(cfg, &mut rec)?;
    rec.finish(cfg)?;
    println!(
        "n={} m={} r={} nnz(M3)={} model_hash={}\nwritten to {}",
        header.n,
        header.m,
        header.r,
        model.m3.nnz(),
        header.model_hash,
        dir.display()
    );
    Ok(header)
}

// ----------------------------------------------------------- steady-state

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRow {
    pub mode: String,
    pub e: Option<f64>,
    pub residual: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
    pub forces: Option<Vec<f64>>,
}

pub fn parse_modes(list: &[String]) -> CliResult<Vec<ModeIndex>> {
    if list.is_empty() {
        return Err(CliError::Config("steady_state.modes: mode list is empty".into()));
    }
    let mut modes = list
        .iter()
        .map(|s| s.parse::<ModeIndex>().map_err(|e| CliError::Config(format!("steady_state.modes: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    modes.sort_by_key(|m| m.noll_j);
    modes.dedup();
    Ok(modes)
}

pub fn cmd_steady_state(cfg: &ExperimentConfig, model_dir: Option<&Path>) -> CliResult<Vec<SteadyRow>> {
    let ss = &cfg.steady_state;
    let modes = parse_modes(&ss.modes)?;
    if ss.amplitude == 0.0 || !ss.amplitude.is_finite() {
        return Err(CliError::Config("steady_state.amplitude: must be finite and nonzero (relative error undefined)".into()));
    }
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let mut rec = Recorder::new(&root, "steady-state");
    let (model, _) = rec.time("model", || obtain_model(cfg, model_dir))?;
    let solver = rec.time("factor", || SteadyStateSolver::new(&model))?;
    let points = model.observation_points();
    let params = SolverParams { tol: ss.tol, max_iter: ss.max_iter };
    let norm_radius = cfg.norm_radius();
    let rows: Vec<SteadyRow> = rec.time("solve", || {
        modes
            .par_iter()
            .map(|&mode| match sweep_one(&solver, &points, norm_radius, mode, ss.amplitude, params) {
                Ok(r) => SteadyRow {
                    mode: mode.label(),
                    e: Some(r.e),
                    residual: Some(r.residual_norm),
                    iterations: Some(r.iterations),
                    status: "ok".into(),
                    forces: Some(r.u),
                },
                Err(err) => {
                    log::warn!("mode {}: {err}", mode.label());
                    SteadyRow {
                        mode: mode.label(),
                        e: None,
                        residual: None,
                        iterations: None,
                        status: format!("failed: {err}").replace(',', ";"),
                        forces: None,
                    }
                }
            })
            .collect()
    });

    let csv = root.join("steady_state.csv");
    io::write_records(
        &["mode", "e", "residual", "iterations", "status"],
        rows.iter().map(|r| {
            vec![
                r.mode.clone(),
                r.e.map(format_float).unwrap_or_default(),
                r.residual.map(format_float).unwrap_or_default(),
                r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                r.status.clone(),
            ]
        }),
        &csv,
    )?;
    rec.add(csv.clone());
    let forces = root.join("steady_state_forces.csv");
    let mut header = vec!["actuator".to_string(), "x".into(), "y".into()];
    header.extend(rows.iter().map(|r| format!("u_{}", r.mode)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_records(
        &header_refs,
        model.layout.positions.iter().enumerate().map(|(a, &(x, y))| {
            let mut row = vec![a.to_string(), format_float(x), format_float(y)];
            row.extend(rows.iter().map(|r| r.forces.as_ref().map(|u| format_float(u[a])).unwrap_or_default()));
            row
        }),
        &forces,
    )?;
    rec.add(forces);
    if ss.svg {
        let labels: Vec<String> = rows.iter().map(|r| r.mode.clone()).collect();
        let values: Vec<f64> = rows.iter().map(|r| r.e.unwrap_or(f64::NAN)).collect();
        let title = format!("steady-state wavefront error, m = {}", model.m());
        write_file(&mut rec, root.join("steady_state.svg"), &svg::bar_chart_log(&title, "relative error e", &labels, &values))?;
    }
    echo_config(cfg, &mut rec)?;
    rec.finish(cfg)?;
    print!("{}", fs::read_to_string(&csv).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(rows)
}

// --------------------------------------------------------------- simulate

/// One dataset from the config's simulation section.
pub fn dataset(cfg: &ExperimentConfig, model: &Model, zmap: &ZernikeBasis, hash: &str, seed: u64, noise_seed: u64) -> CliResult<Traj> {
    let sim = &cfg.simulation;
    let params = DatasetParams {
        h: sim.h,
        f: sim.f,
        seed,
        input_std: sim.input_std,
        init_std: sim.init_std,
    };
    let mut traj = generate_dataset(model, zmap, params)?;
    if let Some(snr) = sim.snr {
        traj = traj.with_noise(snr, noise_seed)?;
    }
    traj.meta.model_hash = Some(hash.to_string());
    Ok(traj)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, model_dir: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> CliResult<Traj> {
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let mut rec = Recorder::new(&root, "simulate");
    let (model, hash) = rec.time("model", || obtain_model(cfg, model_dir))?;
    let zmap = zernike_map(cfg, &model)?;
    let seed = seed.unwrap_or(cfg.seeds.train);
    let traj = rec.time("simulate", || dataset(cfg, &model, &zmap, &hash, seed, cfg.seeds.noise))?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| root.join("trajectory.csv"));
    io::write_trajectory(&traj, &path)?;
    rec.add(path.clone());
    rec.add(io::sidecar_path(&path));
    echo_config(cfg, &mut rec)?;
    rec.finish(cfg)?;
    println!("f={} m={} l={} h={} written to {}", traj.len(), traj.m(), traj.l(), traj.h, path.display());
    Ok(traj)
}

// -------------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSummary {
    pub p: usize,
    pub eps_cl: f64,
    pub eps_ol: f64,
    pub aic: Option<f64>,
    pub outside_fraction: Option<f64>,
    pub whiteness_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub estimator: EstimatorKind,
    pub p_grid: Vec<usize>,
    pub p_aic: Option<usize>,
    pub p_ol: usize,
    pub snr: Option<f64>,
    pub l: usize,
    pub m: usize,
    pub f: usize,
    pub model_hash: Option<String>,
    pub by_open_loop: SelectedSummary,
    pub by_aic: Option<SelectedSummary>,
}

pub fn estimator(cfg: &ExperimentConfig) -> Estimator<f64> {
    let id = &cfg.identification;
    match id.estimator {
        EstimatorKind::Varx => Estimator::Varx { ridge: id.ridge },
        EstimatorKind::Network => Estimator::Network {
            width: id.width,
            depth: id.depth,
            seed: cfg.seeds.weights,
            train: TrainConfig {
                epochs: id.epochs,
                lr: id.lr,
                lr_final: id.lr_final,
                batch: id.batch,
                seed: cfg.seeds.weights,
                ..TrainConfig::default()
            },
        },
    }
}

fn training_record(cfg: &ExperimentConfig, report: &FitReport<f64>) -> TrainingRecord {
    let id = &cfg.identification;
    let trained = !report.history.val_mse.is_empty();
    match id.estimator {
        EstimatorKind::Varx => TrainingRecord {
            estimator: "varx".into(),
            ridge: Some(id.ridge),
            ..TrainingRecord::default()
        },
        EstimatorKind::Network => TrainingRecord {
            estimator: "network".into(),
            seed: Some(cfg.seeds.weights),
            epochs: Some(id.epochs),
            lr: Some(id.lr),
            ridge: None,
            best_epoch: trained.then_some(report.history.best_epoch),
            best_val_mse: trained.then(|| report.history.best_val()),
            best_train_mse: trained.then(|| report.history.best_train()),
        },
    }
}

fn summarize(r: &FitReport<f64>) -> SelectedSummary {
    SelectedSummary {
        p: r.p,
        eps_cl: r.eps_cl,
        eps_ol: r.eps_ol,
        aic: r.aic,
        outside_fraction: r.outside_fraction(),
        whiteness_bound: r.whiteness.as_ref().map(|w| w.bound),
    }
}

fn write_trace(traj: &Traj, cl: &Prediction<f64>, ol: &Prediction<f64>, channel: usize, path: &Path) -> CliResult<()> {
    Ok(io::write_records(
        &["k", "q", "q_cl", "q_ol"],
        (0..traj.len()).map(|k| {
            vec![
                k.to_string(),
                format_float(traj.q[[channel, k]]),
                format_float(cl.q_hat[[channel, k]]),
                format_float(ol.q_hat[[channel, k]]),
            ]
        }),
        path,
    )?)
}

fn whiteness_of(pred: &Prediction<f64>, traj: &Traj, p: usize, max_lag: usize) -> Option<Whiteness<f64>> {
    let resid = pred.residuals(&traj.q, p);
    residual_whiteness(&resid, max_lag.min(resid.nrows().saturating_sub(1) / 4)).ok()
}

/// Load or generate the three datasets.
fn datasets(cfg: &ExperimentConfig, model_dir: Option<&Path>, data_dir: Option<&Path>, rec: &mut Recorder) -> CliResult<([Traj; 3], Option<String>)> {
    let names = ["train", "val", "test"];
    if let Some(dir) = data_dir {
        let loaded = names.iter().map(|n| io::read_trajectory::<f64>(&dir.join(format!("{n}.csv")))).collect::<Result<Vec<_>, _>>()?;
        let hash = loaded[0].meta.model_hash.clone();
        let [a, b, c]: [Traj; 3] = loaded.try_into().expect("three datasets");
        return Ok(([a, b, c], hash));
    }
    let (model, hash) = rec.time("model", || obtain_model(cfg, model_dir))?;
    let zmap = zernike_map(cfg, &model)?;
    let seeds = [cfg.seeds.train, cfg.seeds.val, cfg.seeds.test];
    let sets = rec.time("simulate", || {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &s)| dataset(cfg, &model, &zmap, &hash, s, cfg.seeds.noise + i as u64))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let data = rec.root().join("data");
    for (traj, name) in sets.iter().zip(names) {
        let path = data.join(format!("{name}.csv"));
        io::write_trajectory(traj, &path)?;
        rec.add(io::sidecar_path(&path));
        rec.add(path);
    }
    let [a, b, c]: [Traj; 3] = sets.try_into().expect("three datasets");
    Ok(([a, b, c], Some(hash)))
}

/// Runs order selection end to end and writes every report file.
pub fn cmd_fit(cfg: &ExperimentConfig, model_dir: Option<&Path>, data_dir: Option<&Path>) -> CliResult<FitSummary> {
    let id = &cfg.identification;
    if id.p_grid.is_empty() {
        return Err(CliError::Config("identification.p_grid: candidate list is empty".into()));
    }
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let mut rec = Recorder::new(&root, "fit");
    let ([train, val, test], model_hash) = datasets(cfg, model_dir, data_dir, &mut rec)?;
    if id.trace_channel >= train.l() {
        return Err(CliError::Config(format!("identification.trace_channel: {} but only {} outputs", id.trace_channel, train.l())));
    }
    let data = Datasets {
        train: &train,
        val: &val,
        test: &test,
    };
    let select = SelectConfig {
        estimator: estimator(cfg),
        max_lag: id.max_lag,
    };
    let selection: Selection<f64> = rec.time("select", || select_order(&data, &id.p_grid, &select))?;

    let report_path = root.join("fit_report.csv");
    io::write_fit_reports(&selection.reports, &report_path)?;
    rec.add(report_path);
    for (model, report) in selection.models.iter().zip(&selection.reports) {
        let path = root.join("models").join(format!("predictor_p{:02}.json", report.p));
        ensure_dir(path.parent().expect("parent"))?;
        io::write_predictor(model, training_record(cfg, report), &path)?;
        rec.add(path);
        if !report.history.train_mse.is_empty() {
            let path = root.join("history").join(format!("loss_p{:02}.csv", report.p));
            io::write_loss_history(&report.history, &path)?;
            rec.add(path);
        }
    }

    let mut chosen = vec![selection.p_ol];
    chosen.extend(selection.p_aic.filter(|&p| p != selection.p_ol));
    for &p in &chosen {
        let idx = selection.reports.iter().position(|r| r.p == p).expect("selected p is in the grid");
        let pred: &FittedModel<f64> = &selection.models[idx];
        let cl = predict_closed_loop(pred.as_predictor(), &test)?;
        let ol = predict_open_loop(pred.as_predictor(), &test)?;
        let path = root.join("traces").join(format!("test_p{p:02}.csv"));
        write_trace(&test, &cl, &ol, id.trace_channel, &path)?;
        rec.add(path);
        if let Some(w) = &selection.reports[idx].whiteness {
            let path = root.join("acf").join(format!("acf_p{p:02}.csv"));
            io::write_acf(w, &path)?;
            rec.add(path);
        }
    }

    let ps: Vec<f64> = selection.reports.iter().map(|r| r.p as f64).collect();
    let series = vec![
        ("closed loop".to_string(), selection.reports.iter().map(|r| r.eps_cl).collect()),
        ("open loop".to_string(), selection.reports.iter().map(|r| r.eps_ol).collect()),
    ];
    write_file(&mut rec, root.join("fit_report.svg"), &svg::line_chart("test-set relative error", "past window p", "ε", &ps, &series, true))?;
    let aic: Vec<f64> = selection.reports.iter().map(|r| r.aic.unwrap_or(f64::NAN)).collect();
    write_file(&mut rec, root.join("aic.svg"), &svg::line_chart("AIC", "past window p", "AIC", &ps, &[("AIC".into(), aic)], false))?;

    let by_p = |p: usize| summarize(selection.reports.iter().find(|r| r.p == p).expect("p in grid"));
    let summary = FitSummary {
        estimator: id.estimator,
        p_grid: selection.reports.iter().map(|r| r.p).collect(),
        p_aic: selection.p_aic,
        p_ol: selection.p_ol,
        snr: cfg.simulation.snr,
        l: train.l(),
        m: train.m(),
        f: train.len(),
        model_hash,
        by_open_loop: by_p(selection.p_ol),
        by_aic: selection.p_aic.map(by_p),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
    text.push('\n');
    write_file(&mut rec, root.join("summary.json"), &text)?;
    echo_config(cfg, &mut rec)?;
    rec.finish(cfg)?;
    print!("{}", format_summary(&summary));
    Ok(summary)
}

pub fn format_summary(s: &FitSummary) -> String {
    let mut out = format!(
        "p_ol={} p_aic={} eps_cl={:.4e} eps_ol={:.4e}",
        s.p_ol,
        s.p_aic.map_or("-".into(), |p| p.to_string()),
        s.by_open_loop.eps_cl,
        s.by_open_loop.eps_ol
    );
    if let Some(frac) = s.by_open_loop.outside_fraction {
        out.push_str(&format!(" outside_fraction={frac:.4}"));
    }
    out.push('\n');
    out
}

// --------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub p: usize,
    pub eps_cl: f64,
    pub eps_ol: f64,
    pub ol_diverged: bool,
    pub outside_fraction: Option<f64>,
    pub whiteness_bound: Option<f64>,
}

pub fn cmd_validate(cfg: &ExperimentConfig, predictor: &Path, data: Option<&Path>, model_dir: Option<&Path>) -> CliResult<Validation> {
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let mut rec = Recorder::new(&root, "validate");
    let (model, _) = io::read_predictor::<f64>(predictor)?;
    let traj = match data {
        Some(path) => io::read_trajectory::<f64>(path)?,
        None => {
            let (m, hash) = obtain_model(cfg, model_dir)?;
            let zmap = zernike_map(cfg, &m)?;
            rec.time("simulate", || dataset(cfg, &m, &zmap, &hash, cfg.seeds.test, cfg.seeds.noise + 2))?
        }
    };
    let pred = model.as_predictor();
    let p = pred.p();
    let cl = predict_closed_loop(pred, &traj)?;
    let ol = predict_open_loop(pred, &traj)?;
    let w = whiteness_of(&cl, &traj, p, cfg.identification.max_lag);
    let v = Validation {
        p,
        eps_cl: cl.eps,
        eps_ol: ol.eps,
        ol_diverged: ol.diverged,
        outside_fraction: w.as_ref().map(|w| w.outside_fraction),
        whiteness_bound: w.as_ref().map(|w| w.bound),
    };
    let path = root.join("validate.csv");
    io::write_records(
        &["p", "eps_cl", "eps_ol", "ol_diverged", "outside_fraction"],
        [vec![
            p.to_string(),
            format_float(v.eps_cl),
            format_float(v.eps_ol),
            v.ol_diverged.to_string(),
            v.outside_fraction.map(format_float).unwrap_or_default(),
        ]],
        &path,
    )?;
    rec.add(path);
    let channel = cfg.identification.trace_channel.min(traj.l().saturating_sub(1));
    let path = root.join("validate_trace.csv");
    write_trace(&traj, &cl, &ol, channel, &path)?;
    rec.add(path);
    if let Some(w) = &w {
        let path = root.join("validate_acf.csv");
        io::write_acf(w, &path)?;
        rec.add(path);
    }
    echo_config(cfg, &mut rec)?;
    rec.finish(cfg)?;
    println!(
        "p={} eps_cl={:.4e} eps_ol={:.4e} outside_fraction={}",
        v.p,
        v.eps_cl,
        v.eps_ol,
        v.outside_fraction.map_or("-".into(), |f| format!("{f:.4}"))
    );
    Ok(v)
}

// ----------------------------------------------------------------- report

/// Renders a markdown summary and plots from a finished `fit` run.
pub fn cmd_report(cfg: &ExperimentConfig, run_dir: Option<&Path>) -> CliResult<String> {
    let dir = run_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| CliError::Config(format!("{}: {e} (run `fit` first)", dir.join(name).display())));
    let summary: FitSummary = serde_json::from_str(&read("summary.json")?).map_err(|e| CliError::Config(format!("summary.json: {e}")))?;
    let table = read("fit_report.csv")?;
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let num = |row: &[&str], name: &str| col(name).and_then(|c| row.get(c)).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);

    let mut md = String::from("# Identification report\n\n");
    md.push_str(&format!(
        "estimator: {:?}, l = {}, m = {}, f = {}, snr = {}\n\n",
        summary.estimator,
        summary.l,
        summary.m,
        summary.f,
        summary.snr.map_or("none".into(), |s| s.to_string())
    ));
    md.push_str(&format!(
        "selected by open-loop validation error: p = {}; by AIC: {}\n\n",
        summary.p_ol,
        summary.p_aic.map_or("none".into(), |p| format!("p = {p}"))
    ));
    md.push_str("| p | params | eps_cl | eps_ol | AIC | outside |\n|---|---|---|---|---|---|\n");
    for row in &rows {
        let cell = |name: &str| col(name).and_then(|c| row.get(c)).copied().unwrap_or("");
        let p = cell("p");
        let mark = if p == summary.p_ol.to_string() { " *" } else { "" };
        md.push_str(&format!(
            "| {p}{mark} | {} | {:.3e} | {:.3e} | {} | {} |\n",
            cell("num_params"),
            num(row, "eps_cl"),
            num(row, "eps_ol"),
            cell("aic"),
            cell("outside_fraction")
        ));
    }
    let mut rec = Recorder::new(&dir, "report");
    let ps: Vec<f64> = rows.iter().map(|r| num(r, "p")).collect();
    let series = vec![
        ("closed loop".to_string(), rows.iter().map(|r| num(r, "eps_cl")).collect()),
        ("open loop".to_string(), rows.iter().map(|r| num(r, "eps_ol")).collect()),
        ("open loop (val)".to_string(), rows.iter().map(|r| num(r, "eps_ol_val")).collect()),
    ];
    write_file(&mut rec, dir.join("report_eps.svg"), &svg::line_chart("relative error vs past window", "p", "ε", &ps, &series, true))?;
    let trace = dir.join("traces").join(format!("test_p{:02}.csv", summary.p_ol));
    if let Ok(text) = fs::read_to_string(&trace) {
        let mut k = Vec::new();
        let mut cols: [Vec<f64>; 3] = Default::default();
        for line in text.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect();
            if v.len() == 4 {
                k.push(v[0]);
                for i in 0..3 {
                    cols[i].push(v[i + 1]);
                }
            }
        }
        let [q, cl, ol] = cols;
        let series = vec![("measured".to_string(), q), ("closed loop".to_string(), cl), ("open loop".to_string(), ol)];
        let title = format!("test output, p = {}", summary.p_ol);
        write_file(&mut rec, dir.join("report_trace.svg"), &svg::line_chart(&title, "k", "q", &k, &series, false))?;
    }
    write_file(&mut rec, dir.join("report.md"), &md)?;
    rec.finish(cfg)?;
    print!("{md}");
    Ok(md)
}

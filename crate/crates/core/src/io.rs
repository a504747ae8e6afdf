//! On-disk formats: model directories, trajectory CSVs, predictor JSON and
//! identification reports.
//!
//! Floats are written with `{:e}`, which prints the shortest representation
//! that parses back to the same value, so every file round-trips exactly and
//! identical runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plate_model::{ActuatorLayout, ActuatorParams, BoundaryMode, MaterialParams, PlateGrid, RayleighDamping, SecondOrderModel};
use crate::scalar::Scalar;
use crate::simulate::{Trajectory, TrajectoryMeta};
use crate::sparse::CsrMatrix;
use crate::sysid::{Activation, DenseLayer, FitReport, FittedModel, NetworkModel, Scaling, TrainHistory, VarxModel, Whiteness};

pub const MODEL_HEADER: &str = "model.json";
const MATRIX_FILES: [&str; 5] = ["m1.coo", "m2.coo", "m3.coo", "b.coo", "c.coo"];
const FORMAT_VERSION: u32 = 1;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn from_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn cast<T: Scalar, U: Scalar>(v: T) -> U {
    U::lit(v.as_f64())
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------- models

/// JSON header stored next to the matrix files of an exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub node_pitch: f64,
    pub plate_radius: f64,
    pub boundary_mode: BoundaryMode,
    pub obs_radius: f64,
    pub material: MaterialParams<f64>,
    pub actuator: ActuatorParams<f64>,
    pub rayleigh: RayleighDamping<f64>,
    /// Integer lattice coordinates of every plate node.
    pub lattice: Vec<(i32, i32)>,
    pub actuator_positions: Vec<(f64, f64)>,
    pub actuator_nodes: Vec<usize>,
    pub observed_nodes: Vec<usize>,
    /// mass, damping, stiffness, input, output
    pub matrices: Vec<String>,
    /// SHA-256 over the matrix files and the rest of this header.
    pub model_hash: String,
}

fn matrix_texts<T: Scalar>(model: &SecondOrderModel<T>) -> [String; 5] {
    [&model.m1, &model.m2, &model.m3, &model.b, &model.c].map(|m| m.to_coordinate_text())
}

fn header_hash(header: &ModelHeader, texts: &[String]) -> String {
    let mut canonical = header.clone();
    canonical.model_hash = String::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&canonical).expect("serializable"));
    for (name, t) in MATRIX_FILES.iter().zip(texts) {
        h.update(name.as_bytes());
        h.update(t.as_bytes());
    }
    hex::encode(h.finalize())
}

fn model_header<T: Scalar>(model: &SecondOrderModel<T>, texts: &[String]) -> ModelHeader {
    let mat = &model.material;
    let act = &model.actuator;
    let mut header = ModelHeader {
        format_version: FORMAT_VERSION,
        n: model.n(),
        m: model.m(),
        r: model.r(),
        node_pitch: model.grid.node_pitch.as_f64(),
        plate_radius: model.grid.plate_radius.as_f64(),
        boundary_mode: model.grid.boundary_mode,
        obs_radius: model.obs_radius.as_f64(),
        material: MaterialParams {
            youngs_modulus: mat.youngs_modulus.as_f64(),
            density: mat.density.as_f64(),
            poisson_ratio: mat.poisson_ratio.as_f64(),
            thickness: mat.thickness.as_f64(),
            plate_radius: mat.plate_radius.as_f64(),
        },
        actuator: ActuatorParams {
            stiffness: act.stiffness.as_f64(),
            damping: act.damping.as_f64(),
            mass: act.mass.as_f64(),
            pitch: act.pitch.as_f64(),
            inclusion_radius: act.inclusion_radius.as_f64(),
        },
        rayleigh: RayleighDamping {
            alpha: model.rayleigh.alpha.as_f64(),
            beta: model.rayleigh.beta.as_f64(),
        },
        lattice: model.grid.lattice().to_vec(),
        actuator_positions: model.layout.positions.iter().map(|&(x, y)| (x.as_f64(), y.as_f64())).collect(),
        actuator_nodes: model.layout.node_index.clone(),
        observed_nodes: model.observed.clone(),
        matrices: MATRIX_FILES.iter().map(|s| s.to_string()).collect(),
        model_hash: String::new(),
    };
    header.model_hash = header_hash(&header, texts);
    header
}

/// Content hash of a model, identical to the one written by [`write_model`].
pub fn model_hash<T: Scalar>(model: &SecondOrderModel<T>) -> String {
    let texts = matrix_texts(model);
    model_header(model, &texts).model_hash
}

/// Writes the five matrices as coordinate text plus `model.json` into `dir`
/// (created if missing). Returns the header.
pub fn write_model<T: Scalar>(model: &SecondOrderModel<T>, dir: &Path) -> Result<ModelHeader> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let texts = matrix_texts(model);
    let header = model_header(model, &texts);
    for (name, text) in MATRIX_FILES.iter().zip(&texts) {
        write_text(&dir.join(name), text)?;
    }
    write_text(&dir.join(MODEL_HEADER), &to_json(&header))?;
    Ok(header)
}

pub fn read_model_header(dir: &Path) -> Result<ModelHeader> {
    from_json(&dir.join(MODEL_HEADER))
}

/// Loads a model directory and checks dimensions and the content hash.
pub fn read_model<T: Scalar>(dir: &Path) -> Result<SecondOrderModel<T>> {
    let header_path = dir.join(MODEL_HEADER);
    let header = read_model_header(dir)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(&header_path, format!("unsupported format version {}", header.format_version)));
    }
    let mut texts = Vec::with_capacity(5);
    let mut mats = Vec::with_capacity(5);
    for name in MATRIX_FILES {
        let path = dir.join(name);
        let text = read_text(&path)?;
        mats.push(CsrMatrix::<T>::from_coordinate_text(&text, &path.display().to_string())?);
        texts.push(text);
    }
    let expect = header_hash(&header, &texts);
    if expect != header.model_hash {
        return Err(Error::format(&header_path, "model hash does not match the matrix files"));
    }
    let (n, m, r) = (header.n, header.m, header.r);
    let shapes = [(n, n), (n, n), (n, n), (n, m), (r, n)];
    for ((mat, want), name) in mats.iter().zip(shapes).zip(MATRIX_FILES) {
        if mat.shape() != want {
            return Err(Error::format(dir.join(name), format!("shape {:?}, header implies {want:?}", mat.shape())));
        }
    }
    if header.lattice.len() != n || header.actuator_nodes.len() != m || header.observed_nodes.len() != r {
        return Err(Error::format(&header_path, "node tables disagree with n, m, r"));
    }
    let grid = PlateGrid::from_lattice(cast::<f64, T>(header.node_pitch), cast(header.plate_radius), header.boundary_mode, header.lattice.clone());
    let mut layout = ActuatorLayout::from_positions(header.actuator_positions.iter().map(|&(x, y)| (T::lit(x), T::lit(y))).collect());
    layout.node_index = header.actuator_nodes.clone();
    let hm = header.material;
    let ha = header.actuator;
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("five matrices");
    Ok(SecondOrderModel {
        m1: next(),
        m2: next(),
        m3: next(),
        b: next(),
        c: next(),
        grid,
        layout,
        material: MaterialParams {
            youngs_modulus: T::lit(hm.youngs_modulus),
            density: T::lit(hm.density),
            poisson_ratio: T::lit(hm.poisson_ratio),
            thickness: T::lit(hm.thickness),
            plate_radius: T::lit(hm.plate_radius),
        },
        actuator: ActuatorParams {
            stiffness: T::lit(ha.stiffness),
            damping: T::lit(ha.damping),
            mass: T::lit(ha.mass),
            pitch: T::lit(ha.pitch),
            inclusion_radius: T::lit(ha.inclusion_radius),
        },
        rayleigh: RayleighDamping {
            alpha: T::lit(header.rayleigh.alpha),
            beta: T::lit(header.rayleigh.beta),
        },
        obs_radius: T::lit(header.obs_radius),
        observed: header.observed_nodes,
    })
}

// ---------------------------------------------------------- trajectories

/// JSON written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub h: f64,
    pub f: usize,
    pub m: usize,
    pub l: usize,
    #[serde(flatten)]
    pub meta: TrajectoryMeta,
}

/// `traj.csv` -> `traj.json`
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// Shortest round-trip scientific notation, as used in every CSV.
pub fn format_float<T: Scalar>(v: T) -> String {
    format!("{v:e}")
}

fn fmt<T: Scalar>(v: T) -> String {
    format_float(v)
}

fn opt_fmt<T: Scalar>(v: Option<T>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Writes `k,u_0..u_{m-1},q_0..q_{l-1}` rows plus the JSON sidecar.
pub fn write_trajectory<T: Scalar>(traj: &Trajectory<T>, path: &Path) -> Result<()> {
    let (m, l) = (traj.m(), traj.l());
    let mut w = csv_writer(path)?;
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain((0..m).map(|i| format!("u_{i}")))
        .chain((0..l).map(|j| format!("q_{j}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut row = Vec::with_capacity(1 + m + l);
    for k in 0..traj.len() {
        row.clear();
        row.push(k.to_string());
        row.extend(traj.u.column(k).iter().map(|&v| fmt(v)));
        row.extend(traj.q.column(k).iter().map(|&v| fmt(v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = TrajectorySidecar {
        h: traj.h.as_f64(),
        f: traj.len(),
        m,
        l,
        meta: traj.meta.clone(),
    };
    write_text(&sidecar_path(path), &to_json(&side))
}

pub fn read_trajectory<T: Scalar>(path: &Path) -> Result<Trajectory<T>> {
    let side: TrajectorySidecar = from_json(&sidecar_path(path))?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != 1 + side.m + side.l || header.get(0) != Some("k") {
        return Err(Error::format(path, format!("header has {} columns, sidecar implies {}", header.len(), 1 + side.m + side.l)));
    }
    let mut u = Array2::zeros((side.m, side.f));
    let mut q = Array2::zeros((side.l, side.f));
    let mut count = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if k >= side.f {
            return Err(Error::format(path, "more rows than the sidecar declares"));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::format(path, format!("row {k}: bad number {field:?}")))?;
            if c <= side.m {
                u[[c - 1, k]] = T::lit(v);
            } else {
                q[[c - 1 - side.m, k]] = T::lit(v);
            }
        }
        count += 1;
    }
    if count != side.f {
        return Err(Error::format(path, format!("{count} rows, sidecar declares {}", side.f)));
    }
    let mut traj = Trajectory::from_sequences(T::lit(side.h), u, q)?;
    traj.meta = side.meta;
    Ok(traj)
}

// ------------------------------------------------------------ predictors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Varx,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// `[out, in]`
    pub shape: [usize; 2],
    /// row-major `out x in`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Training metadata stored with a predictor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub estimator: String,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub ridge: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub best_train_mse: Option<f64>,
}

/// A VARX is stored as one bias-free linear layer mapping regressors to
/// outputs in physical units; a network stores its layers in scaled units
/// together with the scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorFile {
    pub kind: PredictorKind,
    pub p: usize,
    pub l: usize,
    pub m: usize,
    pub activation: Activation,
    pub layers: Vec<LayerRecord>,
    pub scaling: Scaling<f64>,
    pub training: TrainingRecord,
}

fn layer_record<T: Scalar>(w: &Array2<T>, b: &Array1<T>) -> LayerRecord {
    LayerRecord {
        shape: [w.nrows(), w.ncols()],
        weights: w.iter().map(|v| v.as_f64()).collect(),
        bias: b.iter().map(|v| v.as_f64()).collect(),
    }
}

fn layer_from<T: Scalar>(rec: &LayerRecord, path: &Path) -> Result<DenseLayer<T>> {
    let [o, i] = rec.shape;
    if rec.weights.len() != o * i || rec.bias.len() != o {
        return Err(Error::format(path, format!("layer {o}x{i} has {} weights, {} biases", rec.weights.len(), rec.bias.len())));
    }
    Ok(DenseLayer {
        w: Array2::from_shape_vec((o, i), rec.weights.iter().map(|&v| T::lit(v)).collect()).expect("shape checked"),
        b: rec.bias.iter().map(|&v| T::lit(v)).collect(),
    })
}

impl PredictorFile {
    pub fn from_model<T: Scalar>(model: &FittedModel<T>, training: TrainingRecord) -> Self {
        match model {
            FittedModel::Varx(v) => {
                let w = v.weight_matrix().t().to_owned();
                Self {
                    kind: PredictorKind::Varx,
                    p: v.p,
                    l: v.l(),
                    m: v.m(),
                    activation: Activation::Identity,
                    layers: vec![layer_record(&w, &Array1::zeros(v.l()))],
                    scaling: Scaling::identity(v.l(), v.m()),
                    training,
                }
            }
            FittedModel::Network(n) => Self {
                kind: PredictorKind::Network,
                p: n.p,
                l: n.l,
                m: n.m,
                activation: n.activation,
                layers: n.layers.iter().map(|ly| layer_record(&ly.w, &ly.b)).collect(),
                scaling: Scaling {
                    output_scale: n.scaling.output_scale.iter().map(|v| v.as_f64()).collect(),
                    input_scale: n.scaling.input_scale.iter().map(|v| v.as_f64()).collect(),
                },
                training,
            },
        }
    }

    pub fn to_model<T: Scalar>(&self, path: &Path) -> Result<FittedModel<T>> {
        let d = self.p * (self.l + self.m);
        let layers = self.layers.iter().map(|r| layer_from::<T>(r, path)).collect::<Result<Vec<_>>>()?;
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::format(path, "no layers")),
        };
        if first.w.ncols() != d || last.w.nrows() != self.l || layers.windows(2).any(|w| w[0].w.nrows() != w[1].w.ncols()) {
            return Err(Error::format(path, "layer shapes do not chain from p(l+m) to l"));
        }
        if self.scaling.output_scale.len() != self.l || self.scaling.input_scale.len() != self.m {
            return Err(Error::format(path, "scaling length mismatch"));
        }
        match self.kind {
            PredictorKind::Varx => {
                if layers.len() != 1 {
                    return Err(Error::format(path, "a VARX predictor has exactly one layer"));
                }
                Ok(FittedModel::Varx(VarxModel::from_weight_matrix(&first.w.t().to_owned(), self.p, self.l, self.m)?))
            }
            PredictorKind::Network => Ok(FittedModel::Network(NetworkModel {
                p: self.p,
                l: self.l,
                m: self.m,
                layers,
                activation: self.activation,
                scaling: Scaling {
                    output_scale: self.scaling.output_scale.iter().map(|&v| T::lit(v)).collect(),
                    input_scale: self.scaling.input_scale.iter().map(|&v| T::lit(v)).collect(),
                },
            })),
        }
    }
}

pub fn write_predictor<T: Scalar>(model: &FittedModel<T>, training: TrainingRecord, path: &Path) -> Result<()> {
    write_text(path, &to_json(&PredictorFile::from_model(model, training)))
}

pub fn read_predictor<T: Scalar>(path: &Path) -> Result<(FittedModel<T>, TrainingRecord)> {
    let file: PredictorFile = from_json(path)?;
    Ok((file.to_model(path)?, file.training))
}

// --------------------------------------------------------------- reports

pub const FIT_REPORT_COLUMNS: [&str; 12] = [
    "p",
    "num_params",
    "eps_cl",
    "eps_ol",
    "eps_cl_val",
    "eps_ol_val",
    "aic",
    "outside_fraction",
    "ol_diverged",
    "best_epoch",
    "best_train_mse",
    "best_val_mse",
];

/// One row per window; empty cells for undefined entries.
pub fn write_fit_reports<T: Scalar>(reports: &[FitReport<T>], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(FIT_REPORT_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in reports {
        let trained = !r.history.val_mse.is_empty();
        let row = [
            r.p.to_string(),
            r.num_params.to_string(),
            fmt(r.eps_cl),
            fmt(r.eps_ol),
            fmt(r.eps_cl_val),
            fmt(r.eps_ol_val),
            opt_fmt(r.aic),
            opt_fmt(r.outside_fraction()),
            r.ol_diverged.to_string(),
            if trained { r.history.best_epoch.to_string() } else { String::new() },
            opt_fmt(trained.then(|| r.history.best_train())),
            opt_fmt(trained.then(|| r.history.best_val())),
        ];
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `epoch,train_mse,val_mse`, epochs counted from 1.
pub fn write_loss_history<T: Scalar>(history: &TrainHistory<T>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "train_mse", "val_mse"]).map_err(|e| csv_err(path, e))?;
    for (e, (t, v)) in history.train_mse.iter().zip(&history.val_mse).enumerate() {
        w.write_record([(e + 1).to_string(), fmt(*t), fmt(*v)]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `lag,bound,acf_0..acf_{l-1}`
pub fn write_acf<T: Scalar>(w: &Whiteness<T>, path: &Path) -> Result<()> {
    let mut out = csv_writer(path)?;
    let l = w.acf.nrows();
    let header: Vec<String> = ["lag".to_string(), "bound".to_string()].into_iter().chain((0..l).map(|j| format!("acf_{j}"))).collect();
    out.write_record(&header).map_err(|e| csv_err(path, e))?;
    for tau in 0..w.acf.ncols() {
        let row: Vec<String> = [(tau + 1).to_string(), fmt(w.bound)].into_iter().chain(w.acf.column(tau).iter().map(|&v| fmt(v))).collect();
        out.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Generic numeric table: one header plus rows of equal length.
pub fn write_table<T: Scalar>(header: &[&str], rows: impl IntoIterator<Item = Vec<T>>, path: &Path) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        out.write_record(row.into_iter().map(fmt)).map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Text table with caller-formatted cells.
pub fn write_records(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>, path: &Path) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        out.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

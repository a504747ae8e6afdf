//! Experiment configuration.
//!
//! A run starts from the built-in defaults, deep-merges the user's JSON file
//! on top, then applies `--set dotted.path=value` overrides. The merged tree
//! is deserialized strictly: unknown keys and missing required keys are
//! reported with their full path.

use std::path::{Path, PathBuf};

use dm_core::plate_model::{ActuatorParams, BoundaryMode, MaterialParams, RayleighDamping};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Keys without defaults.
pub const REQUIRED_KEYS: [&str; 2] = ["grid.node_pitch", "actuator.pitch"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub node_pitch: f64,
    pub boundary_mode: BoundaryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub obs_radius: f64,
    /// Zernike normalization radius; defaults to `obs_radius`.
    pub norm_radius: Option<f64>,
    /// Number of non-piston Zernike modes used as outputs.
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateConfig {
    pub modes: Vec<String>,
    pub amplitude: f64,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub h: f64,
    pub f: usize,
    pub input_std: f64,
    pub init_std: f64,
    /// Variance ratio of added measurement noise; `null` for clean data.
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Network,
    Varx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationConfig {
    pub estimator: EstimatorKind,
    pub p_grid: Vec<usize>,
    pub width: usize,
    pub depth: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: Option<f64>,
    pub batch: Option<usize>,
    /// Ridge weight for the direct least-squares estimator (scaled units).
    pub ridge: f64,
    pub max_lag: usize,
    /// Output channel written to the prediction traces.
    pub trace_channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub train: u64,
    pub val: u64,
    pub test: u64,
    /// Noise for dataset `i` (train, val, test) uses `noise + i`.
    pub noise: u64,
    pub weights: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub material: MaterialParams<f64>,
    pub actuator: ActuatorParams<f64>,
    pub grid: GridConfig,
    pub damping: RayleighDamping<f64>,
    pub observation: ObservationConfig,
    pub steady_state: SteadyStateConfig,
    pub simulation: SimulationConfig,
    pub identification: IdentificationConfig,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for every key; the required keys get placeholders that
    /// [`defaults_tree`] strips.
    fn with_placeholders() -> Self {
        Self {
            material: MaterialParams::zerodur(),
            actuator: ActuatorParams::with_pitch(0.2),
            grid: GridConfig {
                node_pitch: 0.05,
                boundary_mode: BoundaryMode::Free,
            },
            damping: RayleighDamping::default(),
            observation: ObservationConfig {
                obs_radius: 0.6,
                norm_radius: None,
                modes: 32,
            },
            steady_state: SteadyStateConfig {
                modes: ["Z2^0", "Z2^2", "Z3^1", "Z3^3"].map(String::from).to_vec(),
                amplitude: 1e-6,
                tol: 1e-10,
                max_iter: None,
                svg: true,
            },
            simulation: SimulationConfig {
                h: 1e-3,
                f: 4000,
                input_std: 0.5,
                init_std: 1e-6,
                snr: None,
            },
            identification: IdentificationConfig {
                estimator: EstimatorKind::Network,
                p_grid: (1..=20).collect(),
                width: 32,
                depth: 2,
                epochs: 5000,
                lr: 1e-3,
                lr_final: None,
                batch: None,
                ridge: 1e-8,
                max_lag: 100,
                trace_channel: 0,
            },
            seeds: Seeds {
                train: 1,
                val: 2,
                test: 3,
                noise: 100,
                weights: 7,
            },
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn norm_radius(&self) -> f64 {
        self.observation.norm_radius.unwrap_or(self.observation.obs_radius)
    }

    /// Canonical JSON (sorted keys) of the fully resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("serializable").to_string()
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self).expect("serializable")).expect("serializable");
        s.push('\n');
        s
    }
}

/// The defaults as a JSON tree, without the required keys.
pub fn defaults_tree() -> Value {
    let mut tree = serde_json::to_value(ExperimentConfig::with_placeholders()).expect("serializable");
    for key in REQUIRED_KEYS {
        let (section, leaf) = key.split_once('.').expect("dotted");
        tree[section].as_object_mut().expect("section").remove(leaf);
    }
    tree
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn check_known(tree: &Value, schema: &Value, prefix: &str) -> Result<(), CliError> {
    let (Value::Object(t), Value::Object(s)) = (tree, schema) else {
        return Ok(());
    };
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match s.get(k) {
            Some(sub) => check_known(v, sub, &path)?,
            None if REQUIRED_KEYS.contains(&path.as_str()) => {}
            None => return Err(CliError::Config(format!("unknown key `{path}`"))),
        }
    }
    Ok(())
}

/// `a:b` or `a:b:step` (inclusive) as a JSON list of integers.
fn parse_range(s: &str) -> Option<Value> {
    let parts: Vec<u64> = s.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let (lo, hi, step) = match parts[..] {
        [a, b] => (a, b, 1),
        [a, b, c] if c > 0 => (a, b, c),
        _ => return None,
    };
    (lo <= hi).then(|| Value::Array((lo..=hi).step_by(step as usize).map(Value::from).collect()))
}

/// Parses the value half of `--set key=value`: JSON if it parses, an integer
/// range `a:b`, or else a bare string.
pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).ok().or_else(|| parse_range(raw)).unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut node = tree;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{part}` is below a non-object value")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), parse_override_value(raw));
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("key has at least one part")
}

/// Resolves defaults + file + overrides into a validated config.
pub fn resolve(file: Option<&Value>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let schema = defaults_tree();
    let mut tree = schema.clone();
    if let Some(user) = file {
        if !user.is_object() {
            return Err(CliError::Config("config root must be a JSON object".into()));
        }
        check_known(user, &schema, "")?;
        merge(&mut tree, user.clone());
    }
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    check_known(&tree, &schema, "")?;
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // missing fields are reported by serde against the parent section
        match inner.strip_prefix("missing field `").and_then(|r| r.strip_suffix('`')) {
            Some(field) if path == "." => CliError::Config(format!("missing required key `{field}`")),
            Some(field) => CliError::Config(format!("missing required key `{path}.{field}`")),
            None => CliError::Config(format!("`{path}`: {inner}")),
        }
    })?;
    cfg.observation.norm_radius = Some(cfg.norm_radius());
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", p.display())))?)
        }
        None => None,
    };
    resolve(file.as_ref(), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({"grid": {"node_pitch": 0.25}, "actuator": {"pitch": 0.5}})
    }

    #[test]
    fn defaults_fill_everything_else() {
        let cfg = resolve(Some(&minimal()), &[]).unwrap();
        assert_eq!(cfg.grid.node_pitch, 0.25);
        assert_eq!(cfg.actuator.inclusion_radius, 0.9);
        assert_eq!(cfg.observation.norm_radius, Some(0.6));
        assert_eq!(cfg.identification.p_grid.len(), 20);
    }

    #[test]
    fn missing_required_key_names_its_path() {
        let err = resolve(Some(&json!({"grid": {"node_pitch": 0.25}})), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("actuator.pitch"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut user = minimal();
        user["simulation"] = json!({"hh": 1});
        let err = resolve(Some(&user), &[]).unwrap_err();
        assert!(err.to_string().contains("simulation.hh"), "{err}");
        assert!(resolve(Some(&minimal()), &["material.colour=red".into()]).is_err());
    }

    #[test]
    fn overrides_and_ranges() {
        let cfg = resolve(
            Some(&minimal()),
            &[
                "identification.p_grid=1:4".into(),
                "simulation.snr=20".into(),
                "identification.estimator=varx".into(),
                "steady_state.modes=[\"Z2^0\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.identification.p_grid, vec![1, 2, 3, 4]);
        assert_eq!(cfg.simulation.snr, Some(20.0));
        assert_eq!(cfg.identification.estimator, EstimatorKind::Varx);
        assert_eq!(cfg.steady_state.modes, vec!["Z2^0"]);
        assert_eq!(parse_range("2:10:4"), Some(json!([2, 6, 10])));
        let bad = resolve(Some(&minimal()), &["simulation.f=lots".into()]).unwrap_err();
        assert!(bad.to_string().contains("simulation.f"), "{bad}");
    }

    #[test]
    fn echo_round_trips_and_hash_ignores_key_order() {
        let cfg = resolve(Some(&minimal()), &["simulation.f=300".into()]).unwrap();
        let echoed: Value = serde_json::from_str(&cfg.to_pretty_json()).unwrap();
        assert_eq!(resolve(Some(&echoed), &[]).unwrap(), cfg);
        let reordered: Value = serde_json::from_str(r#"{"actuator": {"pitch": 0.5}, "simulation": {"f": 300}, "grid": {"node_pitch": 0.25}}"#).unwrap();
        assert_eq!(resolve(Some(&reordered), &[]).unwrap().canonical_json(), cfg.canonical_json());
    }
}

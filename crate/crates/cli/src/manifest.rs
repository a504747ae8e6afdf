use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dm_core::io::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one command run. The only place wall-clock data is written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub versions: BTreeMap<String, String>,
    pub timings_s: BTreeMap<String, f64>,
    pub started_unix: u64,
    pub threads: usize,
}

/// SHA-256 of the canonical (sorted-key) resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.canonical_json().as_bytes())
}

/// Collects emitted files and stage timings while a command runs.
pub struct Recorder {
    root: PathBuf,
    command: String,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    started: SystemTime,
    clock: Instant,
}

impl Recorder {
    pub fn new(root: &Path, command: &str) -> Self {
        Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            files: Vec::new(),
            timings: BTreeMap::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers a file written by the command.
    pub fn add(&mut self, path: impl Into<PathBuf>) {
        let p = path.into();
        if !self.files.contains(&p) {
            self.files.push(p);
        }
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }

    /// Writes `<command>.manifest.json` into the output root.
    pub fn finish(mut self, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
        self.timings.insert("total".into(), self.clock.elapsed().as_secs_f64());
        let mut artifacts = Vec::with_capacity(self.files.len());
        let mut files = self.files.clone();
        files.sort();
        for f in &files {
            let bytes = std::fs::read(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
            let rel = f.strip_prefix(&self.root).unwrap_or(f);
            artifacts.push(ArtifactEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        let versions = BTreeMap::from([
            ("dmctl".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("dm-core".to_string(), dm_core::VERSION.to_string()),
            ("manifest".to_string(), "1".to_string()),
        ]);
        let manifest = RunManifest {
            command: self.command.clone(),
            config_hash: config_hash(cfg),
            artifacts,
            versions,
            timings_s: self.timings,
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            threads: rayon::current_num_threads(),
        };
        let path = self.root.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

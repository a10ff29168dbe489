use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{PipelineError, RunConfig};

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let canonical = cfg.canonical();
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: sha256_hex(canonical.as_bytes()),
            config: serde_json::from_str(&canonical).expect("canonical config is JSON"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<String, PipelineError> {
        let h = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), h.clone());
        Ok(h)
    }

    pub fn output(&mut self, path: &Path) -> Result<(), PipelineError> {
        let h = hash_file(path)?;
        self.outputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.to_string(), serde_json::to_value(value).expect("note serializes"));
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), PipelineError> {
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full command line as invoked.
    pub args: Vec<String>,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub version: String,
    pub duration_s: f64,
    /// Command-specific facts, e.g. the parameter count of a trained model.
    pub summary: Value,
}

pub struct Recorder {
    started: Instant,
    pub manifest: RunManifest,
    out: PathBuf,
}

impl Recorder {
    pub fn new(command: &str, config: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                args: std::env::args().collect(),
                config: config.clone(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                duration_s: 0.0,
                summary: Value::Object(Default::default()),
            },
            out: out.to_path_buf(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    /// Path of an output file in the run directory, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        if let Value::Object(m) = &mut self.manifest.summary {
            m.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        }
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.manifest.duration_s = self.started.elapsed().as_secs_f64();
        let path = self.out.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }
}

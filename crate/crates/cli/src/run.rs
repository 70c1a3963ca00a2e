//! Per-invocation record written next to a command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            config_paths: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: vec![],
        }
    }

    pub fn config(&mut self, key: &str, value: impl AsRef<Path>) {
        self.config_paths.insert(key.to_string(), value.as_ref().display().to_string());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into().display().to_string());
    }

    /// Stamps the finish time and writes `run.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> dare_core::Result<()> {
        self.finished_unix_ms = now_ms();
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(())
    }
}

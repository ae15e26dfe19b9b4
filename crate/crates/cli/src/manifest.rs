use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<CheckSummary>,
    pub results: Value,
}

pub struct ManifestBuilder {
    start: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            start: Instant::now(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_seconds: 0.0,
                outputs: Vec::new(),
                checks: Vec::new(),
                results: Value::Null,
            },
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.manifest.checks.push(CheckSummary { name: name.into(), passed, detail: detail.into() });
    }

    pub fn results(&mut self, v: Value) {
        self.manifest.results = v;
    }

    pub fn all_passed(&self) -> bool {
        self.manifest.checks.iter().all(|c| c.passed)
    }

    pub fn write(mut self, path: &Path) -> std::io::Result<RunManifest> {
        self.manifest.duration_seconds = self.start.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(path, text + "\n")?;
        Ok(self.manifest)
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tta_core::io::FORMAT_VERSION;

use crate::Failure;

/// Everything needed to rerun a command: written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Effective argument vector after config defaults were applied.
    pub args: Vec<String>,
    pub config: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub format_versions: BTreeMap<String, u32>,
    pub duration_secs: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: &[String]) -> Self {
        let format_versions = [
            ("ttap", FORMAT_VERSION),
            ("ttal", FORMAT_VERSION),
            ("ttaw", FORMAT_VERSION),
            ("report", tta_core::metrics::REPORT_SCHEMA_VERSION),
            (
                "expanded_policy",
                tta_core::augment::EXPANDED_POLICY_VERSION,
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                args: args.to_vec(),
                config: BTreeMap::new(),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                format_versions,
                duration_secs: 0.0,
            },
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.manifest.config.insert(key.to_string(), value);
        self
    }

    pub fn seed(&mut self, key: &str, seed: u64) -> &mut Self {
        self.manifest.seeds.insert(key.to_string(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    pub fn finish(mut self, path: &Path) -> Result<RunManifest, Failure> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        crate::write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}

//! Per-invocation context: output directory, seed and the manifest that
//! names every input.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sst_core::traceio::write_kv;

use crate::error::CliError;
use crate::settings::Settings;

pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, out: PathBuf, seed: u64, config: Option<PathBuf>, overrides: Vec<String>) -> Self {
        Self { command, out, seed, config, overrides, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn create_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", self.out.display())))
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.to_string(), path.display().to_string()));
    }

    /// Path of an output file, recorded for the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    /// Writes `manifest.txt`. The timestamp lives only here.
    pub fn write_manifest(&self, settings: &Settings, extra: &[(String, String)]) -> Result<(), CliError> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut pairs = vec![
            ("command".to_string(), self.command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("created".to_string(), created.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("config".to_string(), self.config.as_ref().map_or("none".into(), |p| p.display().to_string())),
            ("overrides".to_string(), self.overrides.join(" ")),
        ];
        pairs.extend(self.inputs.iter().map(|(k, v)| (format!("input.{k}"), v.clone())));
        pairs.extend(settings.resolved().iter().map(|(k, v)| (format!("setting.{k}"), v.clone())));
        pairs.extend(extra.iter().cloned());
        pairs.push(("outputs".to_string(), self.outputs.join(",")));
        write_kv(&self.out.join("manifest.txt"), &pairs)?;
        Ok(())
    }
}

//! Run manifest written next to every command's outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Serialize)]
struct ManifestBody<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    master_seed: Option<u64>,
    started: &'a str,
    finished: Option<&'a str>,
    outputs: &'a [String],
    config: &'a serde_json::Value,
}

pub struct Manifest {
    path: PathBuf,
    command: String,
    config_hash: String,
    master_seed: Option<u64>,
    started: String,
    outputs: Vec<String>,
    config: serde_json::Value,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Hex SHA-256 of the canonical JSON of every output-affecting parameter.
pub fn config_hash(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn find_seed(value: &serde_json::Value) -> Option<u64> {
    match value {
        serde_json::Value::Object(m) => m.get("master_seed").and_then(serde_json::Value::as_u64),
        serde_json::Value::Array(a) => a.iter().find_map(find_seed),
        _ => None,
    }
}

impl Manifest {
    /// Write `manifest.json` before any result file.
    pub fn start(command: &str, params: &impl Serialize, out: &Path, outputs: &[&str]) -> Result<Self, Failure> {
        let config = serde_json::to_value(params).map_err(|e| Failure::Internal(e.to_string()))?;
        let hashed = serde_json::json!({ "command": command, "params": config, "version": env!("CARGO_PKG_VERSION") });
        let m = Manifest {
            path: out.join("manifest.json"),
            command: command.to_owned(),
            config_hash: config_hash(&hashed),
            master_seed: find_seed(&config),
            started: now(),
            outputs: outputs.iter().map(|o| out.join(o).display().to_string()).collect(),
            config,
        };
        m.write(None)?;
        Ok(m)
    }

    pub fn finish(&mut self) -> Result<(), Failure> {
        let end = now();
        self.write(Some(&end))
    }

    fn write(&self, finished: Option<&str>) -> Result<(), Failure> {
        let body = ManifestBody {
            tool: "rfpim",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_hash: &self.config_hash,
            master_seed: self.master_seed,
            started: &self.started,
            finished,
            outputs: &self.outputs,
            config: &self.config,
        };
        let text = serde_json::to_string_pretty(&body).map_err(|e| Failure::Internal(e.to_string()))?;
        std::fs::write(&self.path, text + "\n").map_err(|e| Failure::Internal(format!("{}: {e}", self.path.display())))
    }
}

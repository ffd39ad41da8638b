//! Run manifests written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every flag after defaults were applied.
    pub flags: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileChecksum>,
    pub outputs: Vec<FileChecksum>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checksum(path: &Path) -> CliResult<FileChecksum> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Unreadable { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok(FileChecksum { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn new<A: Serialize>(command: &str, args: &A, seed: Option<u64>) -> Self {
        let flags = match serde_json::to_value(args) {
            Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        RunManifest {
            command: command.to_string(),
            flags,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn with_inputs(mut self, paths: &[PathBuf]) -> CliResult<Self> {
        self.inputs = paths.iter().map(|p| checksum(p)).collect::<CliResult<_>>()?;
        Ok(self)
    }

    /// Records checksums of `outputs` and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[PathBuf]) -> CliResult<PathBuf> {
        self.outputs = outputs.iter().map(|p| checksum(p)).collect::<CliResult<_>>()?;
        let path = dir.join("manifest.json");
        write_json(&path, &self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

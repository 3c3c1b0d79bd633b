//! Run manifests: what a command read, how it was configured, what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the effective configuration as JSON.
    pub config_hash: String,
    /// Input path to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Output path to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    /// Only timestamp of the run; output files never carry one.
    pub created_unix_ms: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Collects a command's inputs and outputs as it runs.
#[derive(Debug)]
pub struct Run {
    command: String,
    config_hash: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        Run {
            command: command.to_string(),
            config_hash: sha256_hex(&json),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Read an input file, recording its hash.
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read_bytes(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> CliResult<String> {
        String::from_utf8(self.read(path)?).map_err(|_| CliError::Parse(format!("{}: not UTF-8", path.display())))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash.clone(),
            inputs: self.inputs.clone(),
            seed: self.seed,
            outputs: self.outputs.clone(),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
        }
    }

    /// Write the manifest to `path`.
    pub fn finish(self, path: &Path) -> CliResult<RunManifest> {
        let m = self.manifest();
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        Ok(m)
    }
}

/// `<file>.manifest.json` next to a single output file.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

//! Run manifests.
//!
//! Every command writes `<out>.manifest.json` beside its primary output:
//! the command line, the merged engine config, digests of every input and
//! output artifact, the seeds, and the gateway call tally per agent role.
//! A replay-mode run is fully reconstructible from (manifest, fixtures,
//! inputs), and a stale input is caught by its digest instead of silently
//! diverging.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use hypogen_core::error::{Error, Result};
use hypogen_core::gateway::Gateway;
use hypogen_core::model::EngineConfig;

/// A path with the SHA-256 of its content at stamping time.
#[derive(Debug, Clone, Serialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

/// Digest a file into a stamp.
pub fn stamp(path: &Path) -> Result<FileStamp> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Everything needed to reproduce or audit one run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub task_id: Option<String>,
    pub task_config: Option<String>,
    pub mode: Option<String>,
    pub fixtures: Option<String>,
    /// Model id used for fingerprints and live calls.
    pub backend_model: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    /// The merged engine config the run actually used.
    pub engine: Option<EngineConfig>,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    /// Gateway calls per agent role.
    pub gateway_calls: BTreeMap<String, u64>,
    /// Command-specific details.
    pub extra: serde_json::Value,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            task_id: None,
            task_config: None,
            mode: None,
            fixtures: None,
            backend_model: None,
            seed: None,
            seeds: Vec::new(),
            engine: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            gateway_calls: BTreeMap::new(),
            extra: serde_json::Value::Null,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Record an input artifact's digest.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(stamp(path)?);
        Ok(())
    }

    /// Record an output artifact's digest; call after writing it.
    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(stamp(path)?);
        Ok(())
    }

    /// Copy the per-role call tally out of the gateway.
    pub fn record_gateway(&mut self, gateway: &Gateway) {
        self.gateway_calls = gateway
            .call_tallies()
            .into_iter()
            .map(|(role, n)| (role.as_str().to_string(), n))
            .collect();
    }

    /// Write `<out>.manifest.json` beside the primary output.
    pub fn write(&self, primary_out: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary_out);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidData(format!("manifest serialization: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// The manifest path for a given output artifact.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

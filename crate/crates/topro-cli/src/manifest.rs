//! Run manifests: enough state to re-run a command bit-identically.
//!
//! Manifests serialize with a fixed field order and deterministic maps, so
//! two runs over the same inputs differ only in the `timing` block. Input
//! files are recorded by base name plus content hash; output paths are
//! relative to the manifest's directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub task: String,
    pub method: String,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<topro::train::TrainConfig>,
    pub seeds: Vec<u64>,
    /// Base name -> `sha256:<hex>` of every input file.
    pub data_fingerprints: BTreeMap<String, String>,
    /// Output paths relative to this manifest's directory.
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub finished_at: String,
    pub wall_time_secs: f64,
}

/// Wall-clock bracket for one command.
pub struct Stopwatch {
    started_at: String,
    start: Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            started_at: chrono::Utc::now().to_rfc3339(),
            start: Instant::now(),
        }
    }

    pub fn finish(self) -> Timing {
        Timing {
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            wall_time_secs: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// `sha256:<hex>` of a file's contents.
pub fn fingerprint(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read `{}`: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(2 * digest.len());
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(format!("sha256:{hex}"))
}

/// Base-name key for the fingerprint map.
pub fn input_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::data(format!("cannot write `{}`: {e}", path.display())))?;
    Ok(())
}

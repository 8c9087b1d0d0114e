//! Run manifests: what was run, with which resolved configuration, and
//! where the outputs went.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use narrative_core::sweep::write_atomic;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command_line: Vec<String>,
    /// SHA-256 of the resolved configuration, including input file digests.
    pub config_hash: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub engine_version: String,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(CliError::file(path))?))
}

/// `serde_json::Value` objects keep keys sorted, so equal configurations
/// serialize to equal bytes.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

pub struct ManifestBuilder {
    command_line: Vec<String>,
    started_at_unix: u64,
}

impl ManifestBuilder {
    pub fn start() -> Self {
        Self { command_line: std::env::args().collect(), started_at_unix: unix_now() }
    }

    /// Writes `manifest` next to the outputs: inside `dir` when given,
    /// otherwise as `<first output>.manifest.json`.
    pub fn finish(
        self,
        config: Value,
        seed: Option<u64>,
        outputs: Vec<PathBuf>,
        dir: Option<&Path>,
    ) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            schema_version: narrative_core::SCHEMA_VERSION,
            command_line: self.command_line,
            config_hash: config_hash(&config),
            config,
            seed,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_unix: self.started_at_unix,
            finished_at_unix: unix_now(),
            outputs: outputs.clone(),
        };
        let path = match (dir, outputs.first()) {
            (Some(d), _) => d.join("manifest.json"),
            (None, Some(first)) => {
                let mut name = first.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                first.with_file_name(name)
            }
            (None, None) => return Err(CliError::Usage("no output path for the run manifest".into())),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes).map_err(CliError::file(&path))?;
        Ok(path)
    }
}

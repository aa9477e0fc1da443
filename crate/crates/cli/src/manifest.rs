//! Run manifests: every subcommand records its command, configuration,
//! seeds, input hashes, output paths, and wall time next to its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    config: BTreeMap<String, String>,
    seed: u64,
    input_hashes: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("hashing input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.input_hashes.insert(path.display().to_string(), hex);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Write the manifest into `dir`.
    pub fn write(self, dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            version: 1,
            command: self.command,
            config: self.config,
            seed: self.seed,
            input_hashes: self.input_hashes,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_ms: self.started.elapsed().as_millis(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(dir.join(RUN_MANIFEST_FILE), json)
            .with_context(|| format!("writing manifest in {}", dir.display()))?;
        Ok(())
    }
}

//! Run manifests: what ran, with which inputs, producing which outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use disconnector_core::error::Result;
use disconnector_core::rng::RNG_ALGORITHM;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Written at the end of every run; hashes make reruns comparable.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Digest of the effective configuration (or of the inputs for commands
    /// without a config file).
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub rng: String,
    pub partial: bool,
    pub stage_timings_ms: BTreeMap<String, u128>,
    /// Input path -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the run directory) -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    run_dir: PathBuf,
    stage_start: Option<(String, Instant)>,
}

impl ManifestBuilder {
    pub fn new(command: &str, run_dir: &Path, config_digest: String) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                tool: "disconnector".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_digest,
                master_seed: None,
                rng: RNG_ALGORITHM.into(),
                partial: false,
                stage_timings_ms: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
            run_dir: run_dir.to_path_buf(),
            stage_start: None,
        }
    }

    pub fn master_seed(&mut self, seed: u64) {
        self.manifest.master_seed = Some(seed);
    }

    pub fn partial(&mut self, partial: bool) {
        self.manifest.partial = partial;
    }

    pub fn begin_stage(&mut self, name: &str) {
        self.end_stage();
        self.stage_start = Some((name.to_string(), Instant::now()));
    }

    pub fn end_stage(&mut self) {
        if let Some((name, start)) = self.stage_start.take() {
            self.manifest
                .stage_timings_ms
                .insert(name, start.elapsed().as_millis());
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.manifest
            .inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(&self.run_dir)
            .unwrap_or(path)
            .display()
            .to_string();
        self.manifest.outputs.insert(rel, sha256_file(path)?);
        Ok(())
    }

    /// Writes `manifest.json` atomically (temp file + rename).
    pub fn finish(mut self) -> Result<PathBuf> {
        self.end_stage();
        let target = self.run_dir.join("manifest.json");
        let tmp = self.run_dir.join(".manifest.json.tmp");
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| disconnector_core::Error::Parse(format!("manifest: {e}")))?;
        std::fs::write(&tmp, text + "\n")?;
        std::fs::rename(&tmp, &target)?;
        Ok(target)
    }
}

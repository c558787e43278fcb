//! Run manifests: every command records its effective config and the
//! digests of everything it read and wrote, making reruns checkable by
//! hash comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{Classify, Failure};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    /// Effective configuration after defaults, config file, and flag
    /// overrides were applied.
    pub config: serde_json::Value,
    /// Input path (as given) -> sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the out dir) -> sha256. Files with
    /// volatile fields are hashed in canonical form; see `canonicalized`.
    pub outputs: BTreeMap<String, String>,
    /// Output names whose hash is computed after stripping volatile fields,
    /// mapped to a description of the stripping rule.
    pub canonicalized: BTreeMap<String, String>,
    /// Row/record tallies, including skipped counts; nothing is dropped
    /// silently.
    pub counts: BTreeMap<String, u64>,
    pub notes: Vec<String>,
    pub wall_ms: u64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                tool: "asrl",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                seed,
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                canonicalized: BTreeMap::new(),
                counts: BTreeMap::new(),
                notes: Vec::new(),
                wall_ms: 0,
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Hashes a file just written into the out dir.
    pub fn output(&mut self, out_dir: &Path, name: &str) -> Result<(), Failure> {
        let digest = sha256_file(&out_dir.join(name))?;
        self.manifest.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    /// Records a precomputed digest for an output with volatile fields
    /// stripped, plus the rule used.
    pub fn output_canonical(&mut self, name: &str, digest: String, rule: &str) {
        self.manifest.outputs.insert(name.to_string(), digest);
        self.manifest.canonicalized.insert(name.to_string(), rule.to_string());
    }

    pub fn count(&mut self, key: &str, value: u64) {
        self.manifest.counts.insert(key.to_string(), value);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn write(mut self, out_dir: &Path) -> Result<(), Failure> {
        self.manifest.wall_ms = self.started.elapsed().as_millis() as u64;
        let path = out_dir.join("run_manifest.json");
        let body = serde_json::to_string_pretty(&self.manifest).or_runtime()?;
        fs::write(&path, body + "\n")
            .runtime_context(format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes =
        fs::read(path).runtime_context(format!("hashing {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a JSONL training log with the volatile `wall_ms` field zeroed
/// in every line, so identical runs hash identically regardless of timing.
pub fn canonical_log_digest(log_text: &str) -> Result<String, Failure> {
    let mut canonical = String::new();
    for line in log_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value = serde_json::from_str(line).or_runtime()?;
        if let Some(obj) = value.as_object_mut() {
            if let Some(wall) = obj.get_mut("wall_ms") {
                *wall = serde_json::json!(0);
            }
        }
        canonical.push_str(&value.to_string());
        canonical.push('\n');
    }
    Ok(sha256_bytes(canonical.as_bytes()))
}

/// Creates the output directory (parents included) if needed.
pub fn ensure_out_dir(out_dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out_dir)
        .runtime_context(format!("creating out dir {}", out_dir.display()))
}

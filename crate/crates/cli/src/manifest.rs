//! Run manifests: the resolved configuration, every file a command wrote,
//! and a determinism fingerprint over the emitted CSVs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use roci_core::error::{Error, Result};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command: String,
    pub status: String,
    pub error: Option<String>,
    pub wall_clock_secs: f64,
    /// Everything the command wrote, with content hashes.
    pub outputs: Vec<OutputEntry>,
    /// SHA-256 over the sorted (name, hash) pairs of the emitted CSVs.
    /// Identical configuration and seed reproduce it exactly.
    pub fingerprint: String,
    pub diagnostics: Vec<String>,
    /// The full resolved configuration this run used.
    pub config: RunConfig,
}

/// Collects output files and diagnostics while a command runs.
pub struct RunRecorder {
    out_dir: PathBuf,
    command: String,
    started: Instant,
    outputs: Vec<OutputEntry>,
    pub diagnostics: Vec<String>,
}

impl RunRecorder {
    pub fn new(out_dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| {
            Error::Data(format!("cannot create output dir {}: {e}", out_dir.display()))
        })?;
        Ok(RunRecorder {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            started: Instant::now(),
            outputs: Vec::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Write a file into the run directory and record its hash.
    pub fn write_file(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            sha256: hex_digest(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.diagnostics.push(text.into());
    }

    /// Fingerprint of the CSV outputs so far.
    fn fingerprint(&self) -> String {
        let mut rows: Vec<&OutputEntry> = self
            .outputs
            .iter()
            .filter(|o| o.file.ends_with(".csv"))
            .collect();
        rows.sort_by(|a, b| a.file.cmp(&b.file));
        let mut hasher = Sha256::new();
        for row in rows {
            hasher.update(row.file.as_bytes());
            hasher.update(b"\0");
            hasher.update(row.sha256.as_bytes());
            hasher.update(b"\n");
        }
        format!("{:x}", hasher.finalize())
    }

    /// Write the manifest and return it. `error` marks the run incomplete.
    pub fn finish(self, config: &RunConfig, error: Option<&Error>) -> Result<RunManifest> {
        let manifest = RunManifest {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            status: if error.is_none() {
                "complete".to_string()
            } else {
                "incomplete".to_string()
            },
            error: error.map(|e| e.to_string()),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            fingerprint: self.fingerprint(),
            outputs: self.outputs,
            diagnostics: self.diagnostics,
            config: config.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Data(format!("manifest serialise error: {e}")))?;
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

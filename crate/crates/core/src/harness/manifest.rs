//! Result manifests: every artifact of a run with its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, write_bytes};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub condition: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Subcommand or experiment kind that produced the run.
    pub command: String,
    pub seeds: Vec<u64>,
    pub conditions: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
    pub failures: Vec<FailureRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        Self::from_json(&text)
    }

    /// Reads one listed artifact and checks its size and hash.
    pub fn read_verified(&self, root: &Path, path: &str) -> Result<Vec<u8>> {
        let entry = self
            .artifact(path)
            .ok_or_else(|| Error::Integrity(format!("{path} is not listed in the manifest")))?;
        let full = root.join(path);
        let bytes = std::fs::read(&full)
            .map_err(|e| Error::Integrity(format!("{}: {e}", full.display())))?;
        if bytes.len() as u64 != entry.bytes || sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Integrity(format!("{path} does not match its manifest hash")));
        }
        Ok(bytes)
    }

    /// Checks every listed artifact.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for a in &self.artifacts {
            self.read_verified(root, &a.path)?;
        }
        Ok(())
    }
}

/// Collects files for one output directory and writes them in a fixed
/// order.
#[derive(Debug, Default)]
pub(crate) struct ArtifactSet {
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn extend(&mut self, other: ArtifactSet) {
        self.files.extend(other.files);
    }

    /// Writes every file under `root`, then the manifest listing them in
    /// path order.
    pub fn write(
        mut self,
        root: &Path,
        command: &str,
        seeds: &[u64],
        conditions: Vec<String>,
        failures: Vec<FailureRecord>,
    ) -> Result<(PathBuf, Manifest)> {
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = self.files.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("artifact {} written twice", w[0].0)));
        }
        let mut artifacts = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            write_bytes(&root.join(path), bytes)?;
            artifacts.push(ArtifactEntry {
                path: path.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            schema_version: super::SCHEMA_VERSION,
            command: command.into(),
            seeds: seeds.to_vec(),
            conditions,
            artifacts,
            failures,
        };
        let path = root.join(MANIFEST_FILE);
        write_bytes(&path, manifest.to_json()?.as_bytes())?;
        Ok((path, manifest))
    }
}

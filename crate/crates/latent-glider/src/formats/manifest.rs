//! Run manifests: what a command read and wrote, with SHA-256 digests, so
//! a run can be audited and replayed.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory when the file lives below it.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn digest_relative(path: &Path, base: &Path) -> Result<FileDigest> {
    let sha256 = sha256_file(path)?;
    let rel = path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf());
    Ok(FileDigest { path: rel, sha256 })
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: unix_now(),
            finished: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest { path: path.to_path_buf(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Records artifacts (sorted by path), stamps the finish time and writes
    /// `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, artifacts: &[PathBuf]) -> Result<PathBuf> {
        let mut sorted = artifacts.to_vec();
        sorted.sort();
        self.artifacts = sorted.iter().map(|p| digest_relative(p, dir)).collect::<Result<_>>()?;
        self.finished = unix_now();
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self).expect("manifest always serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Artifacts that are missing or whose digest no longer matches.
    pub fn stale_artifacts(&self, dir: &Path) -> Vec<PathBuf> {
        self.artifacts
            .iter()
            .filter(|a| {
                let p = if a.path.is_absolute() { a.path.clone() } else { dir.join(&a.path) };
                sha256_file(&p).map_or(true, |d| d != a.sha256)
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

//! JSON run manifest: the study configuration plus every artifact written,
//! with its SHA-256. Paths are stored relative to the manifest directory.

use std::path::{Path, PathBuf};

use barycentric_rom::study::StudyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunRole {
    Trained,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub nu: f64,
    pub role: RunRole,
    /// `nx x snapshots` MatrixFile.
    pub snapshots: FileRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineEntry {
    pub q: usize,
    /// Trained viscosities in basis order.
    pub params: Vec<f64>,
    /// `nx x q` modes per trained viscosity.
    pub pod_modes: Vec<FileRef>,
    /// `1 x m` eigenvalue spectrum per trained viscosity.
    pub pod_eigenvalues: Vec<FileRef>,
    /// `nx x 1` shared mean.
    pub mean: FileRef,
    /// `nx x np` first stored state of every trained run.
    pub initial_states: FileRef,
    pub archive: FileRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: StudyConfig,
    pub runs: Vec<RunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offline: Option<OfflineEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(config: StudyConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            runs: Vec::new(),
            offline: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn trained(&self) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter(|r| r.role == RunRole::Trained)
    }

    /// Any run (trained or test) at this viscosity.
    pub fn run_at(&self, nu: f64) -> Option<&RunEntry> {
        self.runs.iter().find(|r| (r.nu - nu).abs() <= 1e-12 * nu.abs().max(1.0))
    }

    pub fn offline(&self) -> Result<&OfflineEntry> {
        self.offline
            .as_ref()
            .ok_or_else(|| CliError::MissingData("manifest has no offline stage; run `offline` first".into()))
    }
}

/// Resolves a manifest-relative path.
pub fn resolve(dir: &Path, file: &FileRef) -> PathBuf {
    dir.join(&file.path)
}

/// Reads a referenced file, checking it against its recorded hash.
pub fn read_verified(dir: &Path, file: &FileRef) -> Result<Vec<u8>> {
    let path = resolve(dir, file);
    let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingData(format!("{} not found", path.display())),
        _ => CliError::io(&path, e),
    })?;
    let actual = sha256_hex(&bytes);
    if actual != file.sha256 {
        return Err(CliError::HashMismatch {
            path,
            expected: file.sha256.clone(),
            actual,
        });
    }
    Ok(bytes)
}

/// Writes bytes under `dir` and returns the reference to record.
pub fn write_tracked(dir: &Path, rel: &str, bytes: &[u8]) -> Result<FileRef> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileRef {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
    })
}

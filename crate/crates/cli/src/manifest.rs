//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub fgbm_cli: &'static str,
    pub fgbm_core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects output files in memory so nothing is written unless the whole
/// command succeeded.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s.into_bytes());
        Ok(())
    }

    /// Write every file, then `manifest.json` describing them.
    pub fn commit(self, dir: &Path, mut manifest: RunManifest) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            manifest.outputs.push(OutputFile {
                file: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
        }
        let path = dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(&path, s).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

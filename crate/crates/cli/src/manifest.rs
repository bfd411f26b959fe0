//! `manifest.json`: what produced an output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    #[serde(skip)]
    out_dir: PathBuf,
    #[serde(skip)]
    written: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, out_dir: &Path, seed: Option<u64>, params: impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: "pdlearn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            params: serde_json::to_value(params)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Records a file written under the output directory.
    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.written.push(path.into());
    }

    /// Hashes the outputs and writes `manifest.json`.
    pub fn finish(mut self) -> Result<()> {
        for p in std::mem::take(&mut self.written) {
            let rel = p.strip_prefix(&self.out_dir).unwrap_or(&p);
            let path = rel.to_string_lossy().replace('\\', "/");
            self.outputs.push(FileHash { path, sha256: sha256_file(&p)? });
        }
        self.inputs.sort();
        self.inputs.dedup();
        self.outputs.sort();
        self.outputs.dedup();
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

//! JSON provenance record written by every stage.
//!
//! Keys are emitted in sorted order so manifests diff cleanly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardStats {
    pub omega: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub omega: f64,
    pub sigma_ref: f64,
    pub rank_histogram: Vec<usize>,
    pub unsatisfied_modes: usize,
    pub failed_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub stage_seconds: BTreeMap<String, f64>,
    #[serde(default)]
    pub forward: Vec<ForwardStats>,
    #[serde(default)]
    pub ranks: Vec<RankStats>,
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    /// Files this stage read, with their checksums at read time.
    #[serde(default)]
    pub inputs: Vec<FileEntry>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(stage: &str, config: &RunConfig) -> Self {
        Self {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            stage_seconds: BTreeMap::new(),
            forward: Vec::new(),
            ranks: Vec::new(),
            summary: BTreeMap::new(),
            inputs: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn file_name(stage: &str) -> String {
        format!("{stage}.manifest.json")
    }

    pub fn add_file(&mut self, root: &Path, path: &Path) -> CliResult<()> {
        self.files.push(file_entry(root, path)?);
        Ok(())
    }

    pub fn add_input(&mut self, root: &Path, path: &Path) -> CliResult<()> {
        self.inputs.push(file_entry(root, path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("manifest is always serializable");
        serde_json::to_string_pretty(&v).expect("json value")
    }

    /// Writes `<stage>.manifest.json` into `root` and returns its path.
    pub fn save(&self, root: &Path) -> CliResult<PathBuf> {
        let path = root.join(Self::file_name(&self.stage));
        std::fs::write(&path, self.to_json() + "\n").map_err(CliError::io(&path))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Checks every listed file against its recorded checksum.
    pub fn verify(&self, root: &Path) -> CliResult<()> {
        for f in &self.files {
            let now = sha256_file(&root.join(&f.path))?;
            if now != f.sha256 {
                return Err(CliError::Data(format!("checksum mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = File::open(path).map_err(CliError::io(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf).map_err(CliError::io(path))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn file_entry(root: &Path, path: &Path) -> CliResult<FileEntry> {
    let bytes = std::fs::metadata(path).map_err(CliError::io(path))?.len();
    let rel = path.strip_prefix(root).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        sha256: sha256_file(path)?,
        bytes,
    })
}

//! `run.json` records and input hashing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_FILE: &str = "run.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Fully resolved config; feeding it back reproduces the run.
    pub config: Value,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    pub jobs: usize,
    pub inputs: Vec<InputRecord>,
    /// `started`, `ok`, `partial` or `failed`.
    pub status: String,
    pub error: Option<String>,
}

/// SHA-256 of a file, or of a directory's relative paths and file hashes
/// in sorted order.
pub fn hash_path(path: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect(path, path, &mut files)?;
        files.sort();
        for rel in files {
            h.update(rel.as_bytes());
            h.update([0]);
            h.update(Sha256::digest(fs::read(path.join(&rel))?));
        }
    } else {
        h.update(fs::read(path)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

pub fn write(record: &RunRecord, out: &Path) -> Result<(), CliError> {
    let path = out.join(RUN_FILE);
    let text = serde_json::to_string_pretty(record).expect("run record serializes");
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read(path: &Path) -> Result<RunRecord, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a run record: {e}", path.display())))
}

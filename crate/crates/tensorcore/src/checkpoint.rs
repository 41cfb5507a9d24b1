//! Parameter checkpoints: a JSON manifest plus one little-endian f64 blob
//! per parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::{ParamStore, Scalar, Tensor};

pub const MANIFEST_FILE: &str = "checkpoint.json";
const FORMAT: &str = "lesionkit-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub hyperparameters: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

fn blob_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.f64")
}

pub fn save_checkpoint<T: Scalar>(
    store: &ParamStore<T>,
    dir: &Path,
    hyperparameters: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::with_capacity(store.len());
    for p in store.iter() {
        let file = blob_name(&p.name);
        let mut bytes = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            dtype: "f64le".into(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        hyperparameters,
        params,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| TensorError::Checkpoint(format!("manifest: {e}")))?;
    if m.format != FORMAT {
        return Err(TensorError::Checkpoint(format!("unknown format {:?}", m.format)));
    }
    Ok(m)
}

fn read_blob<T: Scalar>(dir: &Path, entry: &ParamEntry) -> Result<Tensor<T>> {
    if entry.dtype != "f64le" {
        return Err(TensorError::Checkpoint(format!("{}: dtype {}", entry.name, entry.dtype)));
    }
    let bytes = fs::read(dir.join(&entry.file))?;
    let n: usize = entry.shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(TensorError::Checkpoint(format!(
            "{}: blob has {} bytes, shape {:?} needs {}",
            entry.name,
            bytes.len(),
            entry.shape,
            n * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Tensor::new(entry.shape.clone(), data)
}

/// Load a checkpoint into a fresh store (parameter order as saved).
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(ParamStore<T>, serde_json::Value)> {
    let m = read_manifest(dir)?;
    let mut store = ParamStore::new();
    for entry in &m.params {
        store.add(entry.name.clone(), read_blob(dir, entry)?)?;
    }
    Ok((store, m.hyperparameters))
}

/// Overwrite the values of an existing store, which must have exactly the
/// checkpoint's parameter names and shapes.
pub fn load_into<T: Scalar>(store: &mut ParamStore<T>, dir: &Path) -> Result<serde_json::Value> {
    let m = read_manifest(dir)?;
    if m.params.len() != store.len() {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            m.params.len(),
            store.len()
        )));
    }
    for entry in &m.params {
        let id = store
            .find(&entry.name)
            .ok_or_else(|| TensorError::Checkpoint(format!("model has no parameter {:?}", entry.name)))?;
        let t = read_blob(dir, entry)?;
        if t.shape() != store.value(id).shape() {
            return Err(TensorError::Checkpoint(format!(
                "{}: checkpoint shape {:?}, model shape {:?}",
                entry.name,
                t.shape(),
                store.value(id).shape()
            )));
        }
        store.get_mut(id).value = t;
    }
    Ok(m.hyperparameters)
}

//! Checkpoints: a JSON manifest next to a little-endian `f64` blob.
//!
//! `save_checkpoint(store, "dir/model.json")` writes `dir/model.json` and
//! `dir/model.bin`. Loading restores every array bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::{Array, ParamStore};
use crate::{NumError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(store: &ParamStore, manifest: &Path) -> Result<()> {
    let mut entries = Vec::with_capacity(store.len());
    let mut blob = Vec::with_capacity(store.num_values() * 8);
    for (name, arr) in store.iter() {
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: arr.shape().to_vec(),
            dtype: "f64".to_string(),
            byte_offset: blob.len() as u64,
        });
        for v in arr.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let text = serde_json::to_string_pretty(&entries).map_err(|e| NumError::Checkpoint(e.to_string()))?;
    if let Some(dir) = manifest.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(manifest, text + "\n")?;
    fs::write(blob_path(manifest), blob)?;
    Ok(())
}

pub fn load_checkpoint(manifest: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(manifest)?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| NumError::Checkpoint(e.to_string()))?;
    let blob = fs::read(blob_path(manifest))?;
    let mut store = ParamStore::new(0);
    for e in entries {
        if e.dtype != "f64" {
            return Err(NumError::Checkpoint(format!(
                "{}: unsupported dtype {}",
                e.name, e.dtype
            )));
        }
        let len: usize = e.shape.iter().product();
        let start = e.byte_offset as usize;
        let end = start + len * 8;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| NumError::Checkpoint(format!("{}: blob too short", e.name)))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(e.name, Array::new(e.shape, data)?)?;
    }
    Ok(store)
}

//! Checkpoints: named tensors as one flat little-endian f32 blob plus a
//! TOML manifest describing the layout.
//!
//! `save_checkpoint(base, ...)` writes `base.bin` and `base.toml`;
//! values are quantized to f32, which is far below every tolerance the
//! models are held to.

use std::fs;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::MotionError;
use crate::autodiff::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    /// Total f32 element count of the blob, for validation.
    elements: usize,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in f32 elements.
    offset: usize,
}

pub fn save_checkpoint(base: &Path, named: &[(String, &Tensor)]) -> Result<(), MotionError> {
    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0usize;
    for (name, tensor) in named {
        entries.push(Entry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        for &v in tensor.data().iter() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += tensor.data().len();
    }
    let manifest = Manifest {
        version: 1,
        elements: offset,
        tensors: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| MotionError::Manifest(e.to_string()))?;
    fs::write(base.with_extension("toml"), text)?;
    fs::write(base.with_extension("bin"), blob)?;
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<Vec<(String, ArrayD<f64>)>, MotionError> {
    let text = fs::read_to_string(base.with_extension("toml"))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| MotionError::Manifest(e.to_string()))?;
    if manifest.version != 1 {
        return Err(MotionError::Manifest(format!(
            "unsupported version {}",
            manifest.version
        )));
    }
    let blob = fs::read(base.with_extension("bin"))?;
    if blob.len() != manifest.elements * 4 {
        return Err(MotionError::Manifest(format!(
            "blob holds {} bytes, manifest expects {}",
            blob.len(),
            manifest.elements * 4
        )));
    }
    let mut out = Vec::new();
    for entry in &manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let end = entry
            .offset
            .checked_add(count)
            .filter(|&e| e <= manifest.elements)
            .ok_or_else(|| {
                MotionError::Manifest(format!("tensor {} overruns the blob", entry.name))
            })?;
        let values: Vec<f64> = (entry.offset..end)
            .map(|i| {
                let b = [
                    blob[4 * i],
                    blob[4 * i + 1],
                    blob[4 * i + 2],
                    blob[4 * i + 3],
                ];
                f32::from_le_bytes(b) as f64
            })
            .collect();
        let arr = ArrayD::from_shape_vec(ndarray::IxDyn(&entry.shape), values)
            .map_err(|e| MotionError::Manifest(format!("tensor {}: {e}", entry.name)))?;
        out.push((entry.name.clone(), arr));
    }
    Ok(out)
}

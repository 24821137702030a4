//! Parameter files: raw little-endian `f64` data plus a JSON manifest.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset into the data file, in `f64` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub data_file: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Write `<stem>.bin` and `<stem>.json`.
pub fn save_tensors(stem: &Path, tensors: &[(String, &Array2<f64>)], extra: serde_json::Value) -> Result<()> {
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry { name: name.clone(), shape: [t.nrows(), t.ncols()], offset });
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len();
    }
    let manifest = TensorManifest {
        data_file: bin.file_name().unwrap().to_string_lossy().into_owned(),
        tensors: entries,
        extra,
    };
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse(&json, e))?;
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}

pub fn load_tensors(stem: &Path) -> Result<(TensorManifest, Vec<(String, Array2<f64>)>)> {
    let json = stem.with_extension("json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: TensorManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&json, e))?;
    let bin = json.with_file_name(&manifest.data_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::parse(&bin, "length is not a multiple of 8"));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n = e.shape[0] * e.shape[1];
        let slice = data
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::parse(&bin, format!("tensor {} runs past the end of the data", e.name)))?;
        let arr = Array2::from_shape_vec((e.shape[0], e.shape[1]), slice.to_vec())
            .map_err(|err| Error::parse(&bin, err))?;
        out.push((e.name.clone(), arr));
    }
    Ok((manifest, out))
}

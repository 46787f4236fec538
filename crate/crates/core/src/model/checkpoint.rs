//! Binary checkpoint: `MAGIC`, u32 version, u64 manifest length, a JSON
//! manifest, then every parameter as little-endian f64 in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, ModelError, ParamStore, Result, Structure};
use crate::data::NormStats;
use crate::tensor::Array;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MLGNNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: ModelConfig,
    variate_names: Vec<String>,
    fingerprint: String,
    norm_stats: NormStats,
    structure: Option<Structure>,
    tensors: Vec<TensorEntry>,
}

fn bytes_of(a: &Array) -> Vec<u8> {
    a.data().iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let params = model.params();
    let blobs: Vec<Vec<u8>> = params.values().iter().map(bytes_of).collect();
    let manifest = Manifest {
        config: model.config().clone(),
        variate_names: model.variate_names().to_vec(),
        fingerprint: model.fingerprint(),
        norm_stats: model.norm_stats().clone(),
        structure: model.structure().cloned(),
        tensors: params
            .names()
            .iter()
            .zip(params.values())
            .zip(&blobs)
            .map(|((name, a), b)| TensorEntry {
                name: name.clone(),
                shape: a.shape().to_vec(),
                sha256: digest(b),
            })
            .collect(),
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| bad(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(&text)?;
    for b in &blobs {
        w.write_all(b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let len = u64::from_le_bytes(u64b) as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text).map_err(|_| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| bad(format!("manifest: {e}")))?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for t in &manifest.tensors {
        let count: usize = t.shape.iter().product();
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(|_| bad(format!("truncated tensor {}", t.name)))?;
        if digest(&buf) != t.sha256 {
            return Err(bad(format!("checksum mismatch for {}", t.name)));
        }
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        names.push(t.name.clone());
        values.push(Array::new(t.shape.clone(), data).map_err(|e| bad(e.to_string()))?);
    }
    let model = Model::from_parts(
        manifest.config,
        manifest.variate_names,
        manifest.norm_stats,
        manifest.structure,
        ParamStore::from_parts(names, values),
    )?;
    if model.fingerprint() != manifest.fingerprint {
        return Err(bad("hierarchy fingerprint mismatch"));
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

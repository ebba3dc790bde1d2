//! Checkpoint file: magic, JSON header length (u64 LE), JSON header, then
//! every tensor in declaration order as little-endian f32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams, TensorSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ISCKPT1\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    tensors: Vec<TensorSpec>,
    /// Caller-supplied metadata (vocabulary, labels, context settings).
    meta: serde_json::Value,
}

pub fn checkpoint_to_bytes(params: &ModelParams<f32>, meta: &serde_json::Value) -> Vec<u8> {
    let header = Header { model: params.config().clone(), tensors: params.specs().to_vec(), meta: meta.clone() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ModelParams<f32>, serde_json::Value)> {
    let bad = |reason: &str| Error::Schema { line: 0, reason: format!("checkpoint: {reason}") };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let raw = &bytes[16 + len..];
    if !raw.len().is_multiple_of(4) {
        return Err(bad("tensor data is not a whole number of f32 values"));
    }
    let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let params = ModelParams::from_data(&header.model, data)?;
    if params.specs() != header.tensors.as_slice() {
        return Err(bad("tensor table does not match the model config"));
    }
    Ok((params, header.meta))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams<f32>, meta: &serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_bytes(params, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

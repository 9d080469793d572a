//! Checkpoint files: `TFAG0001`, a length-prefixed JSON header holding the
//! config, version tag and free-form metadata, the weights as little-endian
//! f64, then a SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TFAG0001";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    version: String,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Training metadata such as the number of steps taken.
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn into_model(self) -> Result<Model> {
        Model::from_parts(self.config, self.params)
    }

    pub fn steps(&self) -> u64 {
        self.meta.get("steps").and_then(|v| v.as_u64()).unwrap_or(0)
    }
}

pub fn encode(params: &ModelParams, config: &ModelConfig, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let header = Header { config: config.clone(), version: params.version.clone(), meta: meta.clone() };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + 4 + json.len() + 8 + params.values.len() * 8 + 32);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < 8 + 4 + 8 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing magic or truncated"));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(corrupt("checksum mismatch"));
    }
    let json_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let rest = body.get(12..).ok_or_else(|| corrupt("truncated header"))?;
    if rest.len() < json_len + 8 {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&rest[..json_len]).map_err(|e| corrupt(&e.to_string()))?;
    let count = u64::from_le_bytes(rest[json_len..json_len + 8].try_into().unwrap()) as usize;
    let weights = &rest[json_len + 8..];
    if weights.len() != count * 8 {
        return Err(corrupt("weight block length mismatch"));
    }
    let expected = header.config.version();
    if header.version != expected {
        return Err(Error::VersionMismatch { found: header.version, expected });
    }
    let values: Vec<f64> = weights.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Checkpoint { config: header.config, params: ModelParams { version: header.version, values }, meta: header.meta })
}

pub fn save_checkpoint(params: &ModelParams, config: &ModelConfig, meta: &serde_json::Value, path: &Path) -> Result<()> {
    let bytes = encode(params, config, meta)?;
    // Write then rename so readers never see a partial file.
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

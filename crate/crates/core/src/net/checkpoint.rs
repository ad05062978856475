//! Binary checkpoint: magic, version, JSON header (config, layout, layout
//! hash, normalization), then the little-endian parameter vector.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, ModelParams, NetConfig};
use crate::data::NormStats;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QWCKPT\0\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: NetConfig,
    layout: Layout,
    layout_hash: String,
    norm: NormStats,
}

fn format_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let header = Header {
        config: params.config.clone(),
        layout: params.layout().clone(),
        layout_hash: params.layout().hash(),
        norm: params.norm.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(format_err)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&(params.values.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.values.len() * 8);
    for v in &params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(format_err)?;

    let expected = header.config.layout();
    if header.layout != expected || header.layout_hash != expected.hash() {
        return Err(Error::Format("checkpoint layout does not match its config".into()));
    }
    input.read_exact(&mut len)?;
    let count = u64::from_le_bytes(len) as usize;
    if count != expected.total {
        return Err(Error::shape(expected.total, count));
    }
    let mut bytes = vec![0u8; count * 8];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    ModelParams::from_values(header.config, values, header.norm)
}

/// Atomic write: readers never observe a partial checkpoint.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    crate::util::write_atomic(path, |f| write_checkpoint(params, f))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

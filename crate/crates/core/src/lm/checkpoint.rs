//! SPLM checkpoint files.
//!
//! Layout: magic `SPLM`, format version (u16 LE), header length (u32 LE), a
//! UTF-8 JSON header, then raw little-endian f32 tensor data. Header offsets are
//! byte offsets from the start of the data section.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::transformer::TransformerConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPLM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TransformerConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
}

pub(crate) struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub(crate) fn write(path: &Path, config: &TransformerConfig, tensors: &[NamedTensor]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for t in tensors {
        let bytes = (t.data.len() * 4) as u64;
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            bytes,
        });
        offset += bytes;
    }
    let header = serde_json::to_vec(&Header {
        config: config.clone(),
        tensors: entries,
    })
    .map_err(|e| Error::Malformed(e.to_string()))?;

    let mut out = Vec::with_capacity(10 + header.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub(crate) fn read(path: &Path) -> Result<(TransformerConfig, HashMap<String, NamedTensor>)> {
    let raw = fs::read(path)?;
    if raw.len() < 4 || &raw[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: "SPLM" });
    }
    if raw.len() < 10 {
        return Err(Error::Malformed("truncated checkpoint preamble".into()));
    }
    let version = u16::from_le_bytes([raw[4], raw[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(raw[6..10].try_into().unwrap()) as usize;
    let data_start = 10 + header_len;
    if raw.len() < data_start {
        return Err(Error::Malformed("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&raw[10..data_start])
        .map_err(|e| Error::Malformed(format!("checkpoint header: {e}")))?;
    let data = &raw[data_start..];

    let mut tensors = HashMap::with_capacity(header.tensors.len());
    for e in header.tensors {
        let numel: usize = e.shape.iter().product();
        if e.bytes != (numel * 4) as u64 {
            return Err(Error::Malformed(format!("tensor {} size does not match shape", e.name)));
        }
        let start = e.offset as usize;
        let end = start
            .checked_add(e.bytes as usize)
            .filter(|&end| end <= data.len())
            .ok_or_else(|| Error::Malformed(format!("tensor {} out of bounds", e.name)))?;
        let values = data[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(
            e.name.clone(),
            NamedTensor {
                name: e.name,
                shape: e.shape,
                data: values,
            },
        );
    }
    Ok((header.config, tensors))
}

//! The FWCK checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FWCK" | version: u32 (=1) | header_len: u64 | header: UTF-8 JSON | payload
//! ```
//!
//! The header is a JSON array of `{name, dtype, shape, offset, nbytes}` in
//! storage order. `offset` is relative to the start of the payload, tensors are
//! packed back to back, and `dtype` is `"f32"` or `"f64"`. Values are always
//! promoted to `f64` on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamSet, Schema, Tensor};

pub const MAGIC: [u8; 4] = *b"FWCK";
pub const VERSION: u32 = 1;

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

/// Serialize `params` to bytes, storing every tensor as `dtype`.
pub fn encode(params: &ParamSet, dtype: DType) -> Result<Vec<u8>> {
    let mut header = Vec::with_capacity(params.num_layers());
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        let nbytes = (t.len() * dtype.size()) as u64;
        header.push(HeaderEntry {
            name: name.to_string(),
            dtype,
            shape: t.shape().to_vec(),
            offset,
            nbytes,
        });
        offset += nbytes;
    }
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header encode: {e}")))?;

    let mut out = Vec::with_capacity(16 + header_json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, t) in params.iter() {
        match dtype {
            DType::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => t
                .data()
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        }
    }
    Ok(out)
}

fn read_preamble<R: Read>(r: &mut R) -> Result<Vec<HeaderEntry>> {
    let mut fixed = [0u8; 16];
    r.read_exact(&mut fixed)
        .map_err(|_| Error::Format("file shorter than the 16-byte preamble".into()))?;
    if fixed[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}", &fixed[..4])));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(fixed[8..16].try_into().unwrap());
    let mut header = Vec::new();
    r.by_ref()
        .take(header_len)
        .read_to_end(&mut header)
        .map_err(|e| Error::Format(format!("header read: {e}")))?;
    if header.len() as u64 != header_len {
        return Err(Error::Format(format!(
            "header truncated: {} of {header_len} bytes",
            header.len()
        )));
    }
    let entries: Vec<HeaderEntry> = serde_json::from_slice(&header)
        .map_err(|e| Error::Format(format!("header JSON: {e}")))?;
    validate_header(&entries)?;
    Ok(entries)
}

fn validate_header(entries: &[HeaderEntry]) -> Result<()> {
    let mut expected_offset = 0u64;
    for e in entries {
        if e.shape.is_empty() || e.shape.iter().any(|&d| d == 0) {
            return Err(Error::Format(format!("layer `{}` has invalid shape {:?}", e.name, e.shape)));
        }
        let numel: usize = e.shape.iter().product();
        if e.nbytes != (numel * e.dtype.size()) as u64 {
            return Err(Error::Format(format!(
                "layer `{}`: shape {:?} needs {} bytes, header says {}",
                e.name,
                e.shape,
                numel * e.dtype.size(),
                e.nbytes
            )));
        }
        if e.offset != expected_offset {
            return Err(Error::Format(format!(
                "layer `{}` at offset {}, expected {expected_offset}",
                e.name, e.offset
            )));
        }
        expected_offset += e.nbytes;
    }
    Ok(())
}

/// Decode a complete FWCK byte buffer.
pub fn decode(bytes: &[u8]) -> Result<ParamSet> {
    let mut cursor = bytes;
    let entries = read_preamble(&mut cursor)?;
    let payload_len: u64 = entries.iter().map(|e| e.nbytes).sum();
    if (cursor.len() as u64) < payload_len {
        return Err(Error::Format(format!(
            "payload truncated: header declares {payload_len} bytes, {} present",
            cursor.len()
        )));
    }
    if (cursor.len() as u64) > payload_len {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            cursor.len() as u64 - payload_len
        )));
    }
    let mut params = ParamSet::new();
    for e in &entries {
        let start = e.offset as usize;
        let raw = &cursor[start..start + e.nbytes as usize];
        let data: Vec<f64> = match e.dtype {
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        let tensor = Tensor::new(e.shape.clone(), data).map_err(|err| Error::Format(err.to_string()))?;
        params
            .insert(e.name.clone(), tensor)
            .map_err(|err| Error::Format(err.to_string()))?;
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_as(params, path, DType::F64)
}

pub fn save_checkpoint_as(params: &ParamSet, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(params, dtype)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Read only the header of a checkpoint; the payload is never touched.
pub fn read_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let entries = read_preamble(&mut BufReader::new(file))?;
    Ok(Schema(entries.into_iter().map(|e| (e.name, e.shape)).collect()))
}

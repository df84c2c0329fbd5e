//! Binary model container.
//!
//! Layout: `b"CENS"`, format version as `u32` little-endian, a UTF-8 JSON
//! header terminated by a single `\0`, then raw little-endian `f64` tensor
//! payloads in directory order. The header holds the model spec, metadata and
//! a tensor directory (name, shape, byte offset relative to the payload start,
//! byte length).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelMetadata, ParamSet, TrainedModel};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CENS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    metadata: ModelMetadata,
    tensors: Vec<TensorEntry>,
}

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { offset: offset as u64, message: message.into() })
}

pub fn encode_model(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut offset = 0u64;
    for (name, t) in &model.params {
        let length = (t.len() * 8) as u64;
        tensors.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset, length });
        offset += length;
    }
    let header = Header { spec: model.spec.clone(), metadata: model.metadata.clone(), tensors };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(9 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&json);
    out.push(0);
    for t in model.params.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 8 {
        return parse_err(bytes.len(), "file too short for magic and version");
    }
    if &bytes[..4] != MAGIC {
        return parse_err(0, format!("bad magic {:?}", &bytes[..4]));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return parse_err(4, format!("unsupported format version {version}"));
    }
    let Some(nul) = bytes[8..].iter().position(|&b| b == 0) else {
        return parse_err(bytes.len(), "header is not terminated by NUL");
    };
    let header_bytes = &bytes[8..8 + nul];
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| {
        // The header is written as a single line, so the column is a byte offset.
        let col = if e.line() <= 1 { e.column().saturating_sub(1) } else { 0 };
        Error::Parse { offset: (8 + col) as u64, message: format!("bad header: {e}") }
    })?;
    let payload_start = 8 + nul + 1;
    let payload = &bytes[payload_start..];

    let mut params = ParamSet::new();
    let mut expected_offset = 0u64;
    for entry in &header.tensors {
        let numel: usize = entry.shape.iter().product();
        if entry.length != (numel * 8) as u64 {
            return Err(Error::Validation(format!(
                "tensor {} declares {} bytes but shape {:?} needs {}",
                entry.name,
                entry.length,
                entry.shape,
                numel * 8
            )));
        }
        if entry.offset != expected_offset {
            return Err(Error::Validation(format!(
                "tensor {} declared at offset {} but directory order implies {}",
                entry.name, entry.offset, expected_offset
            )));
        }
        let (start, end) = (entry.offset as usize, (entry.offset + entry.length) as usize);
        if end > payload.len() {
            return parse_err(payload_start + payload.len(), format!("payload truncated inside tensor {}", entry.name));
        }
        let data =
            payload[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let tensor = Tensor::new(entry.shape.clone(), data)?;
        if params.insert(entry.name.clone(), tensor).is_some() {
            return Err(Error::Validation(format!("duplicate tensor {}", entry.name)));
        }
        expected_offset += entry.length;
    }
    if expected_offset as usize != payload.len() {
        return parse_err(
            payload_start + expected_offset as usize,
            format!("{} trailing bytes after last tensor", payload.len() - expected_offset as usize),
        );
    }
    TrainedModel::from_params(header.spec, params, header.metadata)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    decode_model(&fs::read(path)?)
}

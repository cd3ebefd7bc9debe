//! Checkpoint layout: the 8-byte magic `MNETCKPT`, a u64 LE header length, a
//! JSON header, then every parameter's values little-endian in header order.

use std::fs;
use std::path::Path;

use mnet_core::graph::MNetConfig;
use mnet_core::tensor::{Real, Tensor};
use mnet_core::graph::MNet;
use serde::{Deserialize, Serialize};

use crate::arch::ArchChoice;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MNETCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub arch: String,
    pub config: MNetConfig,
    /// `f32le` or `f64le`.
    pub dtype: String,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    /// Parameter values widened to f64, in header order.
    pub values: Vec<Vec<f64>>,
}

fn dtype_of<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32le"
    } else {
        "f64le"
    }
}

pub fn save<T: Real>(path: &Path, model: &MNet<T>, arch: &ArchChoice) -> Result<()> {
    let dtype = dtype_of::<T>();
    let mut payload = Vec::new();
    let mut params = Vec::new();
    for p in model.params().iter() {
        params.push(ParamEntry { name: p.name.clone(), shape: p.value.dims().to_vec(), offset: payload.len() as u64 });
        for &v in p.value.data() {
            if dtype == "f32le" {
                payload.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            } else {
                payload.extend_from_slice(&v.f64().to_le_bytes());
            }
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        arch: arch.to_string(),
        config: model.config().clone(),
        dtype: dtype.into(),
        params,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(Error::format(path, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| Error::format(path, e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported format_version {}", header.format_version)));
    }
    let width = match header.dtype.as_str() {
        "f32le" => 4,
        "f64le" => 8,
        other => return Err(Error::UnknownDtype { path: path.into(), dtype: other.into() }),
    };
    let payload = &body[hlen..];
    let mut values = Vec::with_capacity(header.params.len());
    let mut expected_offset = 0u64;
    for p in &header.params {
        if p.offset != expected_offset {
            return Err(Error::format(path, format!("parameter {} at offset {} expected {}", p.name, p.offset, expected_offset)));
        }
        let n = p.shape.iter().product::<usize>();
        let start = p.offset as usize;
        let end = start + n * width;
        if end > payload.len() {
            return Err(Error::PayloadLength { path: path.into(), expected: end as u64, actual: payload.len() as u64 });
        }
        let v = payload[start..end]
            .chunks_exact(width)
            .map(|b| if width == 4 { f32::from_le_bytes(b.try_into().unwrap()) as f64 } else { f64::from_le_bytes(b.try_into().unwrap()) })
            .collect();
        values.push(v);
        expected_offset = end as u64;
    }
    if expected_offset != payload.len() as u64 {
        return Err(Error::PayloadLength { path: path.into(), expected: expected_offset, actual: payload.len() as u64 });
    }
    Ok(Checkpoint { header, values })
}

impl Checkpoint {
    pub fn arch(&self) -> Result<ArchChoice> {
        self.header.arch.parse()
    }

    /// Rebuilds the model and overwrites every parameter; names and shapes
    /// must match the architecture exactly.
    pub fn into_model<T: Real>(&self) -> Result<MNet<T>> {
        let mut model: MNet<T> = self.arch()?.model(&self.header.config, 0)?;
        if model.params().len() != self.header.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, architecture {} has {}",
                self.header.params.len(),
                self.header.arch,
                model.params().len()
            )));
        }
        for ((p, entry), vals) in model.params_mut().iter_mut().zip(&self.header.params).zip(&self.values) {
            if p.name != entry.name || p.value.dims() != entry.shape.as_slice() {
                return Err(Error::Config(format!(
                    "checkpoint parameter {} {:?} does not match model parameter {} {:?}",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.value.dims()
                )));
            }
            p.value = Tensor::from_f64(&entry.shape, vals)?;
        }
        Ok(model)
    }
}

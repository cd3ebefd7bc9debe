//! Volume file pairs: `<name>.json` sidecar plus `<name>.raw` little-endian
//! payload, x fastest.

use std::fs;
use std::path::{Path, PathBuf};

use mnet_core::data::{LabelVolume, Volume};
use mnet_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Image,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32Le,
    U8,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32Le => "f32le",
            Dtype::U8 => "u8",
        }
    }

    pub fn size(self) -> u64 {
        match self {
            Dtype::F32Le => 4,
            Dtype::U8 => 1,
        }
    }

    fn parse(path: &Path, s: &str) -> Result<Self> {
        match s {
            "f32le" => Ok(Dtype::F32Le),
            "u8" => Ok(Dtype::U8),
            other => Err(Error::UnknownDtype { path: path.into(), dtype: other.into() }),
        }
    }
}

/// Sidecar contents. `shape` is `[C, D, H, W]` for images, `[D, H, W]` for labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub kind: VolumeKind,
    pub shape: Vec<usize>,
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub byte_length: u64,
}

pub fn sidecar_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

pub fn payload_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.raw"))
}

fn write_pair(dir: &Path, name: &str, sidecar: &Sidecar, payload: &[u8]) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    let sp = sidecar_path(dir, name);
    fs::write(&sp, json + "\n").map_err(Error::io(&sp))?;
    let pp = payload_path(dir, name);
    fs::write(&pp, payload).map_err(Error::io(&pp))
}

pub fn write_image(dir: &Path, name: &str, vol: &Volume) -> Result<()> {
    let payload: Vec<u8> = vol.voxels.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let mut shape = vec![vol.channels()];
    shape.extend_from_slice(&vol.extents());
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        kind: VolumeKind::Image,
        shape,
        spacing_mm: vol.spacing_mm,
        dtype: Dtype::F32Le.name().into(),
        byte_length: payload.len() as u64,
    };
    write_pair(dir, name, &sidecar, &payload)
}

pub fn write_labels(dir: &Path, name: &str, labels: &LabelVolume) -> Result<()> {
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        kind: VolumeKind::Label,
        shape: labels.shape.to_vec(),
        spacing_mm: labels.spacing_mm,
        dtype: Dtype::U8.name().into(),
        byte_length: labels.labels.len() as u64,
    };
    write_pair(dir, name, &sidecar, &labels.labels)
}

/// Reads and validates a sidecar and its payload.
pub fn read_pair(dir: &Path, name: &str, kind: VolumeKind) -> Result<(Sidecar, Dtype, Vec<u8>)> {
    let sp = sidecar_path(dir, name);
    let text = fs::read_to_string(&sp).map_err(Error::io(&sp))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(&sp, e))?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(Error::format(&sp, format!("unsupported format_version {}", sidecar.format_version)));
    }
    if sidecar.kind != kind {
        return Err(Error::format(&sp, format!("expected kind {kind:?}, found {:?}", sidecar.kind)));
    }
    let dtype = Dtype::parse(&sp, &sidecar.dtype)?;
    let rank = if kind == VolumeKind::Image { 4 } else { 3 };
    if sidecar.shape.len() != rank || sidecar.shape.contains(&0) {
        return Err(Error::format(&sp, format!("shape {:?} is not a positive rank-{rank} shape", sidecar.shape)));
    }
    let expected = sidecar.shape.iter().product::<usize>() as u64 * dtype.size();
    if sidecar.byte_length != expected {
        return Err(Error::format(
            &sp,
            format!("byte_length {} disagrees with shape {:?} of {}", sidecar.byte_length, sidecar.shape, dtype.name()),
        ));
    }
    let pp = payload_path(dir, name);
    let payload = fs::read(&pp).map_err(Error::io(&pp))?;
    if payload.len() as u64 != sidecar.byte_length {
        return Err(Error::PayloadLength { path: pp, expected: sidecar.byte_length, actual: payload.len() as u64 });
    }
    Ok((sidecar, dtype, payload))
}

pub fn read_image(dir: &Path, name: &str) -> Result<Volume> {
    let (sc, dtype, payload) = read_pair(dir, name, VolumeKind::Image)?;
    if dtype != Dtype::F32Le {
        return Err(Error::format(sidecar_path(dir, name), "images must be f32le"));
    }
    let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok(Volume::new(Tensor::from_vec(&sc.shape, data)?, sc.spacing_mm)?)
}

pub fn read_labels(dir: &Path, name: &str) -> Result<LabelVolume> {
    let (sc, dtype, payload) = read_pair(dir, name, VolumeKind::Label)?;
    if dtype != Dtype::U8 {
        return Err(Error::format(sidecar_path(dir, name), "labels must be u8"));
    }
    Ok(LabelVolume::new(payload, [sc.shape[0], sc.shape[1], sc.shape[2]], sc.spacing_mm)?)
}

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{ByteCursor, Network};
use crate::operators::Sinogram;

use super::{read_bytes, write_bytes};

const VOL_FMT: &str = "VOL0 volume";

/// Voxels in row-major `[nz][ny][nx]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeBuffer {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl VolumeBuffer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 8);
        out.extend_from_slice(b"VOL0");
        for d in [self.nx, self.ny, self.nz] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<VolumeBuffer> {
        let mut cur = ByteCursor { bytes, pos: 0, format: VOL_FMT };
        if cur.take(4)? != b"VOL0" {
            return Err(Error::format(VOL_FMT, 0, "bad magic"));
        }
        let (nx, ny, nz) = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
        let count = nx
            .checked_mul(ny)
            .and_then(|n| n.checked_mul(nz))
            .filter(|n| n.checked_mul(8) == Some(cur.remaining()))
            .ok_or_else(|| {
                Error::format(
                    VOL_FMT,
                    16,
                    format!("header says {nx}x{ny}x{nz}, payload has {} bytes", cur.remaining()),
                )
            })?;
        Ok(VolumeBuffer { nx, ny, nz, data: cur.f64s(count)? })
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VolumeBuffer> {
    VolumeBuffer::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_volume(vol: &VolumeBuffer, path: impl AsRef<Path>) -> Result<()> {
    if vol.data.len() != vol.nx * vol.ny * vol.nz {
        return Err(Error::shape("write_volume", (vol.data.len(), 1), (vol.nx * vol.ny * vol.nz, 1)));
    }
    write_bytes(path.as_ref(), &vol.to_bytes())
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    Sinogram::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_sinogram(sino: &Sinogram, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &sino.to_bytes())
}

pub fn write_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &net.to_weight_bytes())
}

/// Reads layer parameters into a network with the given architecture.
pub fn read_weights(spec: crate::network::NetworkSpec, path: impl AsRef<Path>) -> Result<Network> {
    Network::from_weight_bytes(spec, &read_bytes(path.as_ref())?)
}

/// Appends one JSON object per item to `path`, creating it if needed.
pub fn append_json_line<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

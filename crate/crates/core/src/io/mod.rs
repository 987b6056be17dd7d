//! File formats: PGM/PPM images, 16-bit PCM WAV, raw f64 volumes and sinograms, network
//! weights and JSON-lines reports.

mod image;
mod raw;
mod wav;

use std::path::Path;

pub use image::{decode_pnm, encode_pnm, read_image, write_image, ImageBuffer};
pub use raw::{
    append_json_line, read_sinogram, read_volume, read_weights, write_sinogram, write_volume, write_weights,
    VolumeBuffer,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, AudioBuffer};

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

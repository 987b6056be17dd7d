use std::path::Path;

use crate::error::{Error, Result};

use super::{read_bytes, write_bytes};

const FMT: &str = "WAV audio";
const FULL_SCALE: f64 = 32768.0;

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Reads 16-bit PCM, averaging stereo to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format(FMT, 0, "missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::format(FMT, pos, format!("chunk needs {size} bytes, {} remain", bytes.len() - body))
            })?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format(FMT, pos, "fmt chunk too short"));
                }
                let tag = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let rate = le_u32(bytes, body + 4);
                let bits = le_u16(bytes, body + 14);
                if tag != 1 {
                    return Err(Error::format(FMT, body, format!("format tag {tag} is not uncompressed PCM")));
                }
                if bits != 16 {
                    return Err(Error::format(FMT, body + 14, format!("{bits}-bit samples are not supported")));
                }
                if channels != 1 && channels != 2 {
                    return Err(Error::format(FMT, body + 2, format!("{channels} channels not supported")));
                }
                fmt = Some((channels, rate));
            }
            b"data" => {
                let (channels, sample_rate) =
                    fmt.ok_or_else(|| Error::format(FMT, pos, "data chunk before fmt chunk"))?;
                let frame = 2 * channels as usize;
                let samples = bytes[body..end]
                    .chunks_exact(frame)
                    .map(|f| {
                        let sum: f64 = f
                            .chunks_exact(2)
                            .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / FULL_SCALE)
                            .sum();
                        sum / channels as f64
                    })
                    .collect();
                return Ok(AudioBuffer { sample_rate, samples });
            }
            _ => {}
        }
        pos = end + (size & 1);
    }
    Err(Error::format(FMT, pos, "no data chunk"))
}

/// Writes mono 16-bit PCM, clamping samples to `[-1, 1]`.
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &audio.samples {
        let q = (s.clamp(-1.0, 1.0) * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    decode_wav(&read_bytes(path.as_ref())?)
}

pub fn write_wav(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_wav(audio))
}

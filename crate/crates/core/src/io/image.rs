use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{read_bytes, write_bytes};

const FMT: &str = "PNM image";

/// Interleaved samples in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// 1 (grey) or 3 (RGB).
    pub channels: usize,
    pub data: Vec<f64>,
    /// Stored bit depth: 255 or 65535.
    pub maxval: u16,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<ImageBuffer> {
        if channels != 1 && channels != 3 {
            return Err(Error::Domain(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape("ImageBuffer", (data.len(), 1), (width * height * channels, 1)));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
            maxval: 255,
        })
    }

    pub fn from_gray(m: &Matrix) -> ImageBuffer {
        ImageBuffer {
            width: m.cols(),
            height: m.rows(),
            channels: 1,
            data: m.as_slice().to_vec(),
            maxval: 255,
        }
    }

    pub fn with_maxval(mut self, maxval: u16) -> ImageBuffer {
        self.maxval = maxval;
        self
    }

    /// `height × width` for grey images.
    pub fn to_gray(&self) -> Result<Matrix> {
        if self.channels != 1 {
            return Err(Error::Domain("expected a single-channel image".into()));
        }
        Matrix::from_vec(self.height, self.width, self.data.clone())
    }

    /// One row per pixel, one column per channel.
    pub fn to_pixels(&self) -> Matrix {
        Matrix::from_vec(self.width * self.height, self.channels, self.data.clone()).expect("buffer invariant")
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || (bytes[1] != b'5' && bytes[1] != b'6') {
        return Err(Error::format(FMT, 0, "expected P5 or P6 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(FMT, pos, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(FMT, start, "header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(FMT, pos, "expected whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 && maxval != 65535 {
        return Err(Error::format(FMT, pos, format!("unsupported maxval {maxval}")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let h = parse_header(bytes)?;
    let channels = if h.magic[1] == b'5' { 1 } else { 3 };
    let sample_bytes = if h.maxval > 255 { 2 } else { 1 };
    let expected = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels * sample_bytes))
        .ok_or_else(|| Error::format(FMT, h.data_start, "image dimensions overflow"))?;
    let payload = &bytes[h.data_start..];
    if payload.len() < expected {
        return Err(Error::format(
            FMT,
            h.data_start,
            format!("payload truncated: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    let scale = h.maxval as f64;
    let data = if sample_bytes == 1 {
        payload[..expected].iter().map(|&b| b as f64 / scale).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok(ImageBuffer {
        width: h.width,
        height: h.height,
        channels,
        data,
        maxval: h.maxval as u16,
    })
}

/// Binary PGM (1 channel) or PPM (3 channels); samples are clamped to `[0, 1]`.
pub fn encode_pnm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Domain(format!("images have 1 or 3 channels, got {c}"))),
    };
    if img.maxval != 255 && img.maxval != 65535 {
        return Err(Error::Domain(format!("unsupported maxval {}", img.maxval)));
    }
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    let scale = img.maxval as f64;
    for &v in &img.data {
        let q = (v.clamp(0.0, 1.0) * scale).round();
        if img.maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    decode_pnm(&read_bytes(path.as_ref())?)
}

pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pnm(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decodes_literal_pgm() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 64]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.data, vec![0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn comments_and_sixteen_bit() {
        let mut bytes = b"P5\n# made by hand\n1 2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x00, 0xff, 0xff]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.data, vec![256.0 / 65535.0, 1.0]);
        assert_eq!(img.maxval, 65535);
    }

    #[test]
    fn truncated_payload_names_counts() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let msg = decode_pnm(&bytes).unwrap_err().to_string();
        assert!(msg.contains("expected 12 bytes, found 3"), "{msg}");
        assert!(decode_pnm(b"P3 1 1 255\n0").is_err());
        assert!(decode_pnm(b"P5 1 1 100\n0").is_err());
    }

    #[test]
    fn eight_bit_round_trip_within_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let img = ImageBuffer::new(16, 16, 1, data).unwrap();
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        let worst = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1.0 / 255.0);
    }

    #[test]
    fn sixteen_bit_colour_round_trip_is_lossless_at_depth() {
        let data: Vec<f64> = (0..2 * 3 * 3).map(|i| (i * 1000) as f64 / 65535.0).collect();
        let img = ImageBuffer::new(3, 2, 3, data).unwrap().with_maxval(65535);
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn writer_clamps() {
        let img = ImageBuffer::new(2, 1, 1, vec![-0.5, 1.5]).unwrap();
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back.data, vec![0.0, 1.0]);
    }
}

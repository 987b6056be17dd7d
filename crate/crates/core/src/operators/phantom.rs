//! Deterministic synthetic signals standing in for the image, volume and audio data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::operators::sampling::sample_coords;

/// Modified Shepp-Logan table: intensity, semi-axes `a`, `b`, centre `x0`, `y0`, rotation
/// in degrees. Coordinates span `[-1, 1]²` with `y` pointing up.
pub const SHEPP_LOGAN_ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Shepp-Logan head phantom on an `n × n` grid, clamped to `[0, 1]`.
pub fn shepp_logan(n: usize) -> Result<Matrix> {
    if n < 16 {
        return Err(Error::Domain(format!("shepp_logan needs n >= 16, got {n}")));
    }
    let axis = sample_coords(n);
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (x, y) = (axis[c], -axis[r]);
        let mut v = 0.0;
        for &[amp, a, b, x0, y0, deg] in &SHEPP_LOGAN_ELLIPSES {
            let (sin, cos) = deg.to_radians().sin_cos();
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * cos + dy * sin;
            let w = -dx * sin + dy * cos;
            if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                v += amp;
            }
        }
        v.clamp(0.0, 1.0)
    }))
}

/// Rising and falling linear chirps between `f0` and `f1` Hz.
fn chirp_pair(t: f64, f0: f64, f1: f64) -> f64 {
    let rising = 0.45 * (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) * t * t)).sin();
    let falling = 0.25 * (2.0 * PI * (f1 * t - 0.5 * (f1 - f0) * t * t) + 1.0).sin();
    rising + falling
}

/// Pulsed band of incommensurate tones in `[f1, 2·f1)`, nonzero only for `t ≥ ¾`.
fn burst(t: f64, f1: f64) -> f64 {
    const TONES: usize = 12;
    if t < 0.75 {
        return 0.0;
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let q = (t - 0.75) / 0.25;
    let envelope = (PI * q).sin().powi(2) * (0.6 + 0.4 * (2.0 * PI * 6.0 * t).sin());
    let band: f64 = (1..=TONES)
        .map(|k| {
            let freq = f1 * (1.0 + (k as f64 * golden).fract());
            let phase = 2.0 * PI * (k as f64 * 2f64.sqrt()).fract();
            (2.0 * PI * freq * t + phase).sin()
        })
        .sum();
    0.5 * envelope * band / (TONES as f64).sqrt()
}

/// Two crossing chirps plus an amplitude-modulated band-limited burst over the final
/// quarter. One second long at `samples` Hz; values in `[-1, 1]`.
pub fn chirp_audio(samples: usize, f0: f64, f1: f64) -> Vec<f64> {
    (0..samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            (chirp_pair(t, f0, f1) + burst(t, f1)).clamp(-1.0, 1.0)
        })
        .collect()
}

/// A realized 3D grid, row-major over `dims = [nz, ny, nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom3D {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phantom {
    SheppLogan2D { n: usize },
    /// Ball of `radius` in `[-1, 1]³`, 1 inside.
    Sphere3D { n: usize, radius: f64 },
    /// `cells × cells` board alternating between 0.2 and 0.8.
    Checker2D { n: usize, cells: usize },
    Chirp1D { samples: usize, f0: f64, f1: f64 },
}

impl Phantom {
    pub fn render_2d(&self) -> Result<Matrix> {
        match *self {
            Phantom::SheppLogan2D { n } => shepp_logan(n),
            Phantom::Checker2D { n, cells } => {
                if cells == 0 || cells > n {
                    return Err(Error::Domain(format!("checker needs 1..={n} cells, got {cells}")));
                }
                Ok(Matrix::from_fn(n, n, |r, c| {
                    if (r * cells / n + c * cells / n) % 2 == 0 {
                        0.8
                    } else {
                        0.2
                    }
                }))
            }
            _ => Err(Error::Domain(format!("{self:?} is not a 2D phantom"))),
        }
    }

    pub fn render_3d(&self) -> Result<Phantom3D> {
        match *self {
            Phantom::Sphere3D { n, radius } => {
                let axis = sample_coords(n);
                let r2 = radius * radius;
                let mut values = Vec::with_capacity(n * n * n);
                for &z in &axis {
                    for &y in &axis {
                        for &x in &axis {
                            values.push(if x * x + y * y + z * z < r2 { 1.0 } else { 0.0 });
                        }
                    }
                }
                Ok(Phantom3D { dims: [n, n, n], values })
            }
            _ => Err(Error::Domain(format!("{self:?} is not a 3D phantom"))),
        }
    }

    pub fn render_1d(&self) -> Result<Vec<f64>> {
        match *self {
            Phantom::Chirp1D { samples, f0, f1 } => Ok(chirp_audio(samples, f0, f1)),
            _ => Err(Error::Domain(format!("{self:?} is not a 1D phantom"))),
        }
    }
}

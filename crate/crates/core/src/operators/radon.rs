//! Parallel-beam Radon transform and its exact adjoint.
//!
//! The image occupies the unit square `[-½, ½]²` (row 0 at the top). Angles are uniform on
//! `[0, π)`, detector offsets uniform on `[-√2/2, √2/2]` so every ray through the
//! circumscribed circle is covered. Each ray is sampled every half pixel with bilinear
//! interpolation (zero outside the image) and the sum is scaled by the step length. The
//! adjoint scatters with the same weights, so it is the transpose of the implicit sparse
//! matrix.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::ByteCursor;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadonGeometry {
    pub size: usize,
    pub angles: usize,
    pub detectors: usize,
}

impl RadonGeometry {
    pub fn new(size: usize, angles: usize, detectors: usize) -> Result<Self> {
        if size == 0 || angles == 0 || detectors == 0 {
            return Err(Error::Domain(format!(
                "radon geometry needs positive size, angles and detectors, got {size}, {angles}, {detectors}"
            )));
        }
        Ok(RadonGeometry {
            size,
            angles,
            detectors,
        })
    }

    /// Default detector count: enough bins to span the image diagonal at one bin per pixel.
    pub fn default_detectors(size: usize) -> usize {
        ((size as f64) * std::f64::consts::SQRT_2).ceil() as usize + 4
    }

    pub fn angle(&self, a: usize) -> f64 {
        PI * a as f64 / self.angles as f64
    }

    pub fn detector_offset(&self, d: usize) -> f64 {
        if self.detectors == 1 {
            return 0.0;
        }
        -FRAC_1_SQRT_2 + 2.0 * FRAC_1_SQRT_2 * d as f64 / (self.detectors - 1) as f64
    }

    /// Distance between neighbouring detectors in unit-square lengths.
    pub fn detector_spacing(&self) -> f64 {
        if self.detectors == 1 {
            return 2.0 * FRAC_1_SQRT_2;
        }
        2.0 * FRAC_1_SQRT_2 / (self.detectors - 1) as f64
    }

    pub fn step(&self) -> f64 {
        0.5 / self.size as f64
    }

    fn samples_per_ray(&self) -> usize {
        (2.0 * FRAC_1_SQRT_2 / self.step()).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: usize,
    pub detectors: usize,
    /// `angles × detectors` line integrals.
    pub values: Matrix,
}

impl Sinogram {
    pub fn new(values: Matrix) -> Sinogram {
        Sinogram {
            angles: values.rows(),
            detectors: values.cols(),
            values,
        }
    }

    /// `"SINO"`, angles and detectors as little-endian u32, then f64 values row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 8);
        out.extend_from_slice(b"SINO");
        out.extend_from_slice(&(self.angles as u32).to_le_bytes());
        out.extend_from_slice(&(self.detectors as u32).to_le_bytes());
        for v in self.values.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Sinogram> {
        const FMT: &str = "SINO sinogram";
        let mut cur = ByteCursor { bytes, pos: 0, format: FMT };
        if cur.take(4)? != b"SINO" {
            return Err(Error::format(FMT, 0, "bad magic"));
        }
        let angles = cur.u32()? as usize;
        let detectors = cur.u32()? as usize;
        let count = angles
            .checked_mul(detectors)
            .filter(|n| n.checked_mul(8) == Some(cur.remaining()))
            .ok_or_else(|| {
                Error::format(
                    FMT,
                    12,
                    format!("header says {angles}x{detectors}, payload has {} bytes", cur.remaining()),
                )
            })?;
        let values = Matrix::from_vec_finite(angles, detectors, cur.f64s(count)?)?;
        Ok(Sinogram::new(values))
    }
}

/// Bilinear ray weights for one geometry, evaluated on demand.
#[derive(Debug, Clone)]
pub struct RadonProjector {
    geometry: RadonGeometry,
    /// `(sin θ, cos θ)` per angle.
    directions: Vec<(f64, f64)>,
    offsets: Vec<f64>,
    samples: Vec<f64>,
}

impl RadonProjector {
    pub fn new(geometry: RadonGeometry) -> RadonProjector {
        let count = geometry.samples_per_ray();
        let half = (count - 1) as f64 / 2.0;
        RadonProjector {
            geometry,
            directions: (0..geometry.angles).map(|a| geometry.angle(a).sin_cos()).collect(),
            offsets: (0..geometry.detectors).map(|d| geometry.detector_offset(d)).collect(),
            samples: (0..count).map(|k| (k as f64 - half) * geometry.step()).collect(),
        }
    }

    pub fn geometry(&self) -> RadonGeometry {
        self.geometry
    }

    /// Calls `f(pixel, weight)` for every interpolation weight of one ray, in a fixed order.
    #[inline]
    fn for_each_weight(&self, angle: usize, detector: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.geometry.size;
        let nf = n as f64;
        let step = self.geometry.step();
        let (sin, cos) = self.directions[angle];
        let s = self.offsets[detector];
        for &t in &self.samples {
            let x = s * cos - t * sin;
            let y = s * sin + t * cos;
            // Continuous pixel coordinates; pixel centres sit on integers.
            let u = (x + 0.5) * nf - 0.5;
            let v = (0.5 - y) * nf - 0.5;
            if u <= -1.0 || v <= -1.0 || u >= nf || v >= nf {
                continue;
            }
            let (c0, r0) = (u.floor(), v.floor());
            let (fu, fv) = (u - c0, v - r0);
            let (c0, r0) = (c0 as i64, r0 as i64);
            for (dr, dc, w) in [
                (0, 0, (1.0 - fu) * (1.0 - fv)),
                (0, 1, fu * (1.0 - fv)),
                (1, 0, (1.0 - fu) * fv),
                (1, 1, fu * fv),
            ] {
                let (r, c) = (r0 + dr, c0 + dc);
                if w == 0.0 || r < 0 || c < 0 || r >= n as i64 || c >= n as i64 {
                    continue;
                }
                f(r as usize * n + c as usize, w * step);
            }
        }
    }

    /// Line integrals of an image given as a flat row-major buffer of `size²` values.
    pub fn project_flat(&self, image: &[f64]) -> Result<Vec<f64>> {
        let n2 = self.geometry.size * self.geometry.size;
        if image.len() != n2 {
            return Err(Error::shape("radon_project", (image.len(), 1), (n2, 1)));
        }
        let detectors = self.geometry.detectors;
        Ok(parallel::map_indices(self.geometry.angles * detectors, |ray| {
            let mut sum = 0.0;
            self.for_each_weight(ray / detectors, ray % detectors, |p, w| sum += w * image[p]);
            sum
        }))
    }

    /// Scatters ray values back onto the pixel grid with the projection weights. Each
    /// angle scatters into its own buffer; buffers are summed in angle order.
    pub fn adjoint_flat(&self, rays: &[f64]) -> Result<Vec<f64>> {
        let g = self.geometry;
        if rays.len() != g.angles * g.detectors {
            return Err(Error::shape("radon_adjoint", (rays.len(), 1), (g.angles, g.detectors)));
        }
        let per_angle = parallel::map_indices(g.angles, |a| {
            let mut image = vec![0.0; g.size * g.size];
            for d in 0..g.detectors {
                let value = rays[a * g.detectors + d];
                if value != 0.0 {
                    self.for_each_weight(a, d, |p, w| image[p] += w * value);
                }
            }
            image
        });
        let mut image = vec![0.0; g.size * g.size];
        for part in per_angle {
            for (acc, v) in image.iter_mut().zip(part) {
                *acc += v;
            }
        }
        Ok(image)
    }

    pub fn project(&self, image: &Matrix) -> Result<Sinogram> {
        if image.rows() != image.cols() || image.rows() != self.geometry.size {
            return Err(Error::shape(
                "radon_project",
                image.shape(),
                (self.geometry.size, self.geometry.size),
            ));
        }
        let values = self.project_flat(image.as_slice())?;
        Ok(Sinogram::new(Matrix::from_vec(self.geometry.angles, self.geometry.detectors, values)?))
    }

    pub fn adjoint(&self, sino: &Sinogram) -> Result<Matrix> {
        if sino.angles != self.geometry.angles || sino.detectors != self.geometry.detectors {
            return Err(Error::shape(
                "radon_adjoint",
                (sino.angles, sino.detectors),
                (self.geometry.angles, self.geometry.detectors),
            ));
        }
        let n = self.geometry.size;
        Matrix::from_vec(n, n, self.adjoint_flat(sino.values.as_slice())?)
    }
}

/// Parallel-beam projection of a square image.
pub fn radon_project(image: &Matrix, angles: usize, detectors: usize) -> Result<Sinogram> {
    if image.rows() != image.cols() {
        return Err(Error::Domain(format!(
            "radon projection needs a square image, got {}x{}",
            image.rows(),
            image.cols()
        )));
    }
    let geometry = RadonGeometry::new(image.rows(), angles, detectors)?;
    RadonProjector::new(geometry).project(image)
}

/// Exact adjoint of [`radon_project`] for an `image_size²` image.
pub fn radon_adjoint(sino: &Sinogram, image_size: usize) -> Result<Matrix> {
    if sino.values.shape() != (sino.angles, sino.detectors) {
        return Err(Error::shape(
            "radon_adjoint",
            sino.values.shape(),
            (sino.angles, sino.detectors),
        ));
    }
    let geometry = RadonGeometry::new(image_size, sino.angles, sino.detectors)?;
    RadonProjector::new(geometry).adjoint(sino)
}

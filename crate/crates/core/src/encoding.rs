//! Log-linear Fourier feature mapping applied to raw coordinates before the first layer.
//!
//! Each input scalar `v` expands to `[v, cos(2πf₀v), sin(2πf₀v), …, cos(2πf_{m-1}v), sin(2πf_{m-1}v)]`
//! with `f_j = σ^{j/m}`; the per-dimension blocks are concatenated in input order.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub sigma: f64,
    pub mapping_size: usize,
    #[serde(default = "default_true")]
    pub include_identity: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EncodingSpec {
    fn default() -> Self {
        EncodingSpec {
            sigma: 10.0,
            mapping_size: 16,
            include_identity: true,
        }
    }
}

impl EncodingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidSpec(format!("encoding sigma must exceed 1, got {}", self.sigma)));
        }
        if self.mapping_size == 0 {
            return Err(Error::InvalidSpec("encoding mapping_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Features emitted per input dimension.
    pub fn features_per_dim(&self) -> usize {
        2 * self.mapping_size + usize::from(self.include_identity)
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * self.features_per_dim()
    }

    /// Angular frequencies `2π σ^{j/m}`, `j = 0..m`.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        let m = self.mapping_size as f64;
        (0..self.mapping_size)
            .map(|j| 2.0 * PI * self.sigma.powf(j as f64 / m))
            .collect()
    }
}

/// Encodes every row of `coords` (`N × d`) into `N × d·(1+2m)` (or `d·2m` without the
/// identity channel).
pub fn fourier_encode(coords: &Matrix, enc: &EncodingSpec) -> Result<Matrix> {
    enc.validate()?;
    let freqs = enc.angular_frequencies();
    Ok(encode_with(coords, enc, &freqs))
}

pub(crate) fn encode_with(coords: &Matrix, enc: &EncodingSpec, freqs: &[f64]) -> Matrix {
    let d = coords.cols();
    let width = enc.output_dim(d);
    let mut out = Matrix::zeros(coords.rows(), width);
    let per_dim = enc.features_per_dim();
    parallel::for_each_row_block(out.as_mut_slice(), width, |first_row, block| {
        for (offset, out_row) in block.chunks_mut(width).enumerate() {
            let row = coords.row(first_row + offset);
            for (dim, &v) in row.iter().enumerate() {
                let slot = &mut out_row[dim * per_dim..(dim + 1) * per_dim];
                let mut idx = 0;
                if enc.include_identity {
                    slot[0] = v;
                    idx = 1;
                }
                for &w in freqs {
                    let (s, c) = (w * v).sin_cos();
                    slot[idx] = c;
                    slot[idx + 1] = s;
                    idx += 2;
                }
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_input_gives_unit_cosines() {
        let enc = EncodingSpec {
            sigma: 3.0,
            mapping_size: 2,
            include_identity: true,
        };
        let out = fourier_encode(&Matrix::column(vec![0.0]), &enc).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quarter_period() {
        let enc = EncodingSpec {
            sigma: 4.0,
            mapping_size: 1,
            include_identity: true,
        };
        let out = fourier_encode(&Matrix::column(vec![0.25]), &enc).unwrap();
        assert_eq!(out[(0, 0)], 0.25);
        assert!(out[(0, 1)].abs() < 1e-15);
        assert!((out[(0, 2)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn output_width_and_block_order() {
        let enc = EncodingSpec::default();
        let coords = Matrix::from_vec(1, 2, vec![0.1, -0.7]).unwrap();
        let out = fourier_encode(&coords, &enc).unwrap();
        assert_eq!(out.cols(), 2 * 33);
        assert_eq!(out[(0, 0)], 0.1);
        assert_eq!(out[(0, 33)], -0.7);
        let without = EncodingSpec {
            include_identity: false,
            ..enc
        };
        assert_eq!(fourier_encode(&coords, &without).unwrap().cols(), 64);
    }

    #[test]
    fn invalid_specs_rejected() {
        let low = EncodingSpec {
            sigma: 1.0,
            ..Default::default()
        };
        assert!(fourier_encode(&Matrix::zeros(1, 1), &low).is_err());
        let empty = EncodingSpec {
            mapping_size: 0,
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn frequencies_are_log_linear() {
        let enc = EncodingSpec {
            sigma: 10.0,
            mapping_size: 8,
            include_identity: true,
        };
        let f = enc.angular_frequencies();
        let ratio = enc.sigma.powf(1.0 / 8.0);
        for w in f.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!((f[0] - 2.0 * PI).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cos_sin_pairs_on_unit_circle(v in -3.0f64..3.0, sigma in 1.5f64..40.0, m in 1usize..12) {
            let enc = EncodingSpec { sigma, mapping_size: m, include_identity: true };
            let out = fourier_encode(&Matrix::column(vec![v]), &enc).unwrap();
            for j in 0..m {
                let c = out[(0, 1 + 2 * j)];
                let s = out[(0, 2 + 2 * j)];
                prop_assert!((c * c + s * s - 1.0).abs() < 1e-14);
            }
        }
    }
}

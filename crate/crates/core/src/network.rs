//! Coordinate network `Φ(x) = W_n(φ_{n-1} ∘ … ∘ φ_1 ∘ γ)(x) + b_n`.
//!
//! `γ` is the optional Fourier mapping, each `φ_i` is an affine map followed by the
//! elementwise activation, and the last layer is affine only. Weights are stored
//! `fan_in × fan_out` so a batch `X (N × fan_in)` maps to `X·W + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: ActivationKind,
    pub encoding: Option<EncodingSpec>,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec("input and output dimensions must be positive".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidSpec("hidden_width must be at least 1".into()));
        }
        self.activation.validate()?;
        if let Some(enc) = &self.encoding {
            enc.validate()?;
        }
        Ok(())
    }

    /// Width fed to the first affine layer.
    pub fn first_layer_input(&self) -> usize {
        match &self.encoding {
            Some(enc) => enc.output_dim(self.input_dim),
            None => self.input_dim,
        }
    }

    /// `(fan_in, fan_out)` of every affine layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let first = self.first_layer_input();
        if self.hidden_layers == 0 {
            return vec![(first, self.output_dim)];
        }
        let mut shapes = vec![(first, self.hidden_width)];
        for _ in 1..self.hidden_layers {
            shapes.push((self.hidden_width, self.hidden_width));
        }
        shapes.push((self.hidden_width, self.output_dim));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weight: Matrix,
    /// `1 × fan_out`.
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// Initialises parameters from `spec.init_seed`.
    ///
    /// Gaussian-window, Gabor and ReLU layers draw from `U(±√(1/fan_in))`. Sine networks use
    /// the sinusoidal scheme: `U(±1/fan_in)` for the first layer and `U(±√(6/fan_in)/ω₀)`
    /// afterwards. Biases draw from `U(±√(1/fan_in))` throughout.
    pub fn build(spec: NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (fan_in, fan_out))| {
                let fan = fan_in as f64;
                let w_bound = match spec.activation {
                    ActivationKind::Sine { .. } if i == 0 => 1.0 / fan,
                    ActivationKind::Sine { omega0 } => (6.0 / fan).sqrt() / omega0,
                    _ => (1.0 / fan).sqrt(),
                };
                let b_bound = (1.0 / fan).sqrt();
                let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-w_bound..=w_bound));
                let bias = Matrix::from_fn(1, fan_out, |_, _| rng.random_range(-b_bound..=b_bound));
                Layer { weight, bias }
            })
            .collect();
        Ok(Network { spec, layers })
    }

    /// Reassembles a network from stored parameters, checking every shape against `spec`.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Network> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((fan_in, fan_out), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.weight.shape() != (*fan_in, *fan_out) || layer.bias.shape() != (1, *fan_out) {
                return Err(Error::InvalidSpec(format!(
                    "layer {i}: expected weight {:?} and bias {:?}, got {:?} and {:?}",
                    (fan_in, fan_out),
                    (1, fan_out),
                    layer.weight.shape(),
                    layer.bias.shape()
                )));
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(Error::InvalidSpec(format!("layer {i} holds non-finite parameters")));
            }
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Flat little-endian weight file: `"INRW"`, version, layer count, then per layer
    /// `rows, cols` (u32), the weight matrix row-major and the `cols` bias values (f64).
    pub fn to_weight_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.parameter_count() * 8 + self.layers.len() * 8);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.weight.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.weight.cols() as u32).to_le_bytes());
            for v in layer.weight.as_slice().iter().chain(layer.bias.as_slice()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_weight_bytes(spec: NetworkSpec, bytes: &[u8]) -> Result<Network> {
        Network::from_layers(spec, parse_weight_bytes(bytes)?)
    }
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"INRW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn parse_weight_bytes(bytes: &[u8]) -> Result<Vec<Layer>> {
    const FMT: &str = "INRW weights";
    let mut cur = ByteCursor { bytes, pos: 0, format: FMT };
    if cur.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::format(FMT, 0, "bad magic"));
    }
    let version = cur.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(FMT, 4, format!("unsupported version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let header_at = cur.pos;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let values = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_add(cols))
            .ok_or_else(|| Error::format(FMT, header_at, "layer size overflows"))?;
        let need = values
            .checked_mul(8)
            .ok_or_else(|| Error::format(FMT, header_at, "layer size overflows"))?;
        if need > cur.remaining() {
            return Err(Error::format(
                FMT,
                cur.pos,
                format!("layer needs {need} bytes, {} remain", cur.remaining()),
            ));
        }
        let weight = Matrix::from_vec_finite(rows, cols, cur.f64s(rows * cols)?)?;
        let bias = Matrix::from_vec_finite(1, cols, cur.f64s(cols)?)?;
        layers.push(Layer { weight, bias });
    }
    if cur.remaining() != 0 {
        return Err(Error::format(FMT, cur.pos, format!("{} trailing bytes", cur.remaining())));
    }
    Ok(layers)
}

/// Bounds-checked little-endian reader over an in-memory file.
pub(crate) struct ByteCursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub format: &'static str,
}

impl<'a> ByteCursor<'a> {
    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(
                self.format,
                self.pos,
                format!("expected {n} more bytes, found {}", self.remaining()),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(hidden_layers: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: 2,
            output_dim: 1,
            hidden_layers,
            hidden_width: 256,
            activation: ActivationKind::Trident { s0: 5.0 },
            encoding: Some(EncodingSpec {
                sigma: 10.0,
                mapping_size: 16,
                include_identity: true,
            }),
            init_seed: 42,
        }
    }

    #[test]
    fn first_affine_width_follows_encoding() {
        let net = Network::build(spec(2)).unwrap();
        assert_eq!(net.layers()[0].weight.shape(), (66, 256));
        assert_eq!(net.layers().len(), 3);
        assert_eq!(net.layers()[2].weight.shape(), (256, 1));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = Network::build(spec(2)).unwrap();
        let b = Network::build(spec(2)).unwrap();
        assert_eq!(a.to_weight_bytes(), b.to_weight_bytes());
        let mut other = spec(2);
        other.init_seed = 43;
        assert_ne!(Network::build(other).unwrap().to_weight_bytes(), a.to_weight_bytes());
    }

    #[test]
    fn zero_hidden_layers_is_single_affine() {
        let net = Network::build(spec(0)).unwrap();
        assert_eq!(net.layers().len(), 1);
        assert_eq!(net.layers()[0].weight.shape(), (66, 1));
    }

    #[test]
    fn sine_init_bounds() {
        let mut s = spec(2);
        s.activation = ActivationKind::Sine { omega0: 10.0 };
        s.encoding = None;
        let net = Network::build(s).unwrap();
        let first = net.layers()[0].weight.as_slice();
        assert!(first.iter().all(|w| w.abs() <= 0.5));
        let hidden_bound = (6.0f64 / 256.0).sqrt() / 10.0;
        assert!(net.layers()[1].weight.as_slice().iter().all(|w| w.abs() <= hidden_bound));
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = spec(1);
        s.hidden_width = 0;
        assert!(matches!(Network::build(s), Err(Error::InvalidSpec(_))));
        let mut s = spec(1);
        s.activation = ActivationKind::Trident { s0: -1.0 };
        assert!(Network::build(s).is_err());
    }

    #[test]
    fn weight_bytes_round_trip_and_layout() {
        let mut s = spec(1);
        s.hidden_width = 3;
        let net = Network::build(s.clone()).unwrap();
        let bytes = net.to_weight_bytes();
        assert_eq!(&bytes[..4], b"INRW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 66);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(Network::from_weight_bytes(s.clone(), &bytes).unwrap(), net);

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(parse_weight_bytes(truncated), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(parse_weight_bytes(&bad).is_err());
        let mut other = s;
        other.hidden_width = 4;
        assert!(Network::from_weight_bytes(other, &bytes).is_err());
    }
}

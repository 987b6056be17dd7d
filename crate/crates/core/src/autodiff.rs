//! Forward pass with a recording tape and exact reverse-mode gradients for the layer
//! family `affine → activation → … → affine`.

use crate::activation::{activate, apply_derivative, ActivationKind};
use crate::encoding::encode_with;
use crate::error::{Error, Result};
use crate::gemm;
use crate::matrix::Matrix;
use crate::network::Network;
use crate::training::mse_loss;

/// What one affine layer saw during the forward pass.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    /// `None` for the final, purely affine layer.
    pub activation: Option<ActivationKind>,
    /// Layer input `x` (`N × fan_in`).
    pub input: Matrix,
    /// Pre-activation `z = x·W + b` (`N × fan_out`).
    pub pre: Matrix,
}

/// Intermediates of a single forward pass. Consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// Angular frequencies of the input mapping, if one was applied.
    pub frequencies: Option<Vec<f64>>,
    pub records: Vec<LayerRecord>,
    output_shape: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Loss gradients with the exact shapes of the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Matrix::zeros(1, l.bias.cols()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weight.as_slice().iter().chain(g.bias.as_slice()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Parameters in layer order, weight before bias, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.as_slice().iter().chain(g.bias.as_slice()).copied())
            .collect()
    }
}

fn input_features(net: &Network, coords: &Matrix) -> Result<(Matrix, Option<Vec<f64>>)> {
    let spec = net.spec();
    if coords.cols() != spec.input_dim {
        return Err(Error::shape("forward", coords.shape(), (coords.rows(), spec.input_dim)));
    }
    Ok(match &spec.encoding {
        Some(enc) => {
            let freqs = enc.angular_frequencies();
            (encode_with(coords, enc, &freqs), Some(freqs))
        }
        None => (coords.clone(), None),
    })
}

fn affine(x: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    let mut z = x.matmul(weight)?;
    z.add_row_broadcast(bias)?;
    Ok(z)
}

/// Evaluates the network on `coords` (`N × input_dim`) and records the tape.
pub fn forward(net: &Network, coords: &Matrix) -> Result<(Matrix, Tape)> {
    let (mut x, frequencies) = input_features(net, coords)?;
    let activation = net.spec().activation;
    let last = net.layers().len() - 1;
    let mut records = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let pre = affine(&x, &layer.weight, &layer.bias)?;
        let (act, next) = if i == last {
            (None, pre.clone())
        } else {
            (Some(activation), activate(&activation, &pre))
        };
        records.push(LayerRecord { activation: act, input: x, pre });
        x = next;
    }
    if let Some(index) = x.first_non_finite() {
        return Err(Error::NonFinite {
            index,
            context: "network output",
        });
    }
    let output_shape = x.shape();
    Ok((
        x,
        Tape {
            frequencies,
            records,
            output_shape,
        },
    ))
}

/// Forward pass without a tape, evaluated in row blocks to bound memory on large grids.
pub fn predict(net: &Network, coords: &Matrix) -> Result<Matrix> {
    const BLOCK: usize = 16_384;
    if coords.rows() <= BLOCK {
        return predict_block(net, coords);
    }
    let mut out = Vec::with_capacity(coords.rows() * net.spec().output_dim);
    let indices: Vec<usize> = (0..coords.rows()).collect();
    for chunk in indices.chunks(BLOCK) {
        out.extend(predict_block(net, &coords.gather_rows(chunk))?.into_vec());
    }
    Matrix::from_vec(coords.rows(), net.spec().output_dim, out)
}

fn predict_block(net: &Network, coords: &Matrix) -> Result<Matrix> {
    let (mut x, _) = input_features(net, coords)?;
    let activation = net.spec().activation;
    let last = net.layers().len() - 1;
    for (i, layer) in net.layers().iter().enumerate() {
        let z = affine(&x, &layer.weight, &layer.bias)?;
        x = if i == last { z } else { activate(&activation, &z) };
    }
    if let Some(index) = x.first_non_finite() {
        return Err(Error::NonFinite {
            index,
            context: "network output",
        });
    }
    Ok(x)
}

/// Gradients of a loss with respect to every parameter, given `upstream = ∂L/∂output`.
pub fn backward(net: &Network, tape: Tape, upstream: &Matrix) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    backward_into(net, tape, upstream, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`], but adds into `grads`.
///
/// Weight gradients are sums over rows, accumulated by resuming each fused multiply-add
/// chain from the value already in `grads`. Feeding consecutive row blocks of one batch
/// through this function therefore yields the same bits as a single call on the whole
/// batch.
pub fn backward_into(net: &Network, tape: Tape, upstream: &Matrix, grads: &mut Gradients) -> Result<()> {
    if tape.records.len() != net.layers().len() || grads.layers.len() != net.layers().len() {
        return Err(Error::StaleTape(format!(
            "tape has {} layers, gradients {}, network {}",
            tape.records.len(),
            grads.layers.len(),
            net.layers().len()
        )));
    }
    if upstream.shape() != tape.output_shape {
        return Err(Error::shape("backward", upstream.shape(), tape.output_shape));
    }
    for (i, ((rec, layer), g)) in tape.records.iter().zip(net.layers()).zip(&grads.layers).enumerate() {
        if rec.input.cols() != layer.weight.rows() || rec.pre.cols() != layer.weight.cols() {
            return Err(Error::StaleTape(format!(
                "layer {i}: recorded {:?} -> {:?}, parameters are {:?}",
                rec.input.shape(),
                rec.pre.shape(),
                layer.weight.shape()
            )));
        }
        if g.weight.shape() != layer.weight.shape() || g.bias.shape() != layer.bias.shape() {
            return Err(Error::shape("backward_into", g.weight.shape(), layer.weight.shape()));
        }
    }

    let records = &tape.records;
    let mut delta = upstream.clone();
    for i in (0..records.len()).rev() {
        let rec = &records[i];
        if let Some(kind) = rec.activation {
            // The activation output of layer i is the recorded input of layer i + 1.
            apply_derivative(&kind, &rec.pre, &records[i + 1].input, &mut delta);
        }
        let g = &mut grads.layers[i];
        let input_t = rec.input.transpose();
        gemm::gemm_acc(input_t.as_slice(), delta.as_slice(), g.weight.as_mut_slice(), delta.rows(), delta.cols());
        for row in delta.as_slice().chunks(delta.cols().max(1)) {
            for (acc, v) in g.bias.as_mut_slice().iter_mut().zip(row) {
                *acc += v;
            }
        }
        if i > 0 {
            delta = delta.matmul_nt(&net.layers()[i].weight)?;
        }
    }
    Ok(())
}

/// Largest relative disagreement between the analytic MSE gradient and central
/// differences, `|g − ĝ| / max(|g|, |ĝ|, 1e-12)`, over every parameter.
pub fn finite_diff_check(net: &Network, coords: &Matrix, targets: &Matrix, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("finite difference step must be positive, got {eps}")));
    }
    let (pred, tape) = forward(net, coords)?;
    let (_, upstream) = mse_loss(&pred, targets)?;
    let analytic = backward(net, tape, &upstream)?.flatten();

    let loss_at = |n: &Network| -> Result<f64> {
        let (p, _) = forward(n, coords)?;
        Ok(mse_loss(&p, targets)?.0)
    };

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut flat_index = 0;
    for li in 0..probe.layers().len() {
        for which in 0..2 {
            let len = {
                let l = &probe.layers()[li];
                if which == 0 { l.weight.len() } else { l.bias.len() }
            };
            for k in 0..len {
                let original = param(&mut probe, li, which, k, None);
                param(&mut probe, li, which, k, Some(original + eps));
                let plus = loss_at(&probe)?;
                param(&mut probe, li, which, k, Some(original - eps));
                let minus = loss_at(&probe)?;
                param(&mut probe, li, which, k, Some(original));
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic[flat_index];
                let denom = a.abs().max(numeric.abs()).max(1e-12);
                worst = worst.max((a - numeric).abs() / denom);
                flat_index += 1;
            }
        }
    }
    Ok(worst)
}

fn param(net: &mut Network, layer: usize, which: usize, k: usize, set: Option<f64>) -> f64 {
    let l = &mut net.layers_mut()[layer];
    let slot = if which == 0 {
        &mut l.weight.as_mut_slice()[k]
    } else {
        &mut l.bias.as_mut_slice()[k]
    };
    if let Some(v) = set {
        *slot = v;
    }
    *slot
}

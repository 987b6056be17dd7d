//! Elementwise nonlinearities: the Gaussian window and the comparison baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    /// `exp(-(s0·z)²)`.
    Trident { s0: f64 },
    /// `sin(omega0·z)`.
    Sine { omega0: f64 },
    /// Real Gabor wavelet `cos(omega0·z)·exp(-(s0·z)²)`.
    GaborReal { omega0: f64, s0: f64 },
    Relu,
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ActivationKind::Trident { s0 } => s0 > 0.0 && s0.is_finite(),
            ActivationKind::Sine { omega0 } => omega0 > 0.0 && omega0.is_finite(),
            ActivationKind::GaborReal { omega0, s0 } => {
                omega0 > 0.0 && s0 > 0.0 && omega0.is_finite() && s0.is_finite()
            }
            ActivationKind::Relu => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("activation parameters must be positive: {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            ActivationKind::Trident { s0 } => trident_pointwise(z, s0),
            ActivationKind::Sine { omega0 } => (omega0 * z).sin(),
            ActivationKind::GaborReal { omega0, s0 } => {
                let t = s0 * z;
                (omega0 * z).cos() * (-(t * t)).exp()
            }
            ActivationKind::Relu => z.max(0.0),
        }
    }

    /// Derivative at `z`, given the already computed `a = eval(z)`.
    ///
    /// ReLU uses 0 at exactly `z = 0`.
    #[inline]
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match *self {
            ActivationKind::Trident { s0 } => -2.0 * s0 * s0 * z * a,
            ActivationKind::Sine { omega0 } => omega0 * (omega0 * z).cos(),
            ActivationKind::GaborReal { omega0, s0 } => {
                let t = s0 * z;
                let window = (-(t * t)).exp();
                -omega0 * (omega0 * z).sin() * window - 2.0 * s0 * s0 * z * a
            }
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Trident { .. } => "trident",
            ActivationKind::Sine { .. } => "sine",
            ActivationKind::GaborReal { .. } => "gabor",
            ActivationKind::Relu => "relu",
        }
    }
}

/// Gaussian window `exp(-(s0·x)²)` on a scalar.
#[inline]
pub fn trident_pointwise(x: f64, s0: f64) -> f64 {
    let t = s0 * x;
    (-(t * t)).exp()
}

/// Applies `kind` to every entry of `z`.
pub fn activate(kind: &ActivationKind, z: &Matrix) -> Matrix {
    let mut out = z.clone();
    let cols = out.cols();
    parallel::for_each_row_block(out.as_mut_slice(), cols, |_, block| {
        for v in block {
            *v = kind.eval(*v);
        }
    });
    out
}

/// `upstream ⊙ σ'(pre)`, computed in place on `upstream`.
pub(crate) fn apply_derivative(kind: &ActivationKind, pre: &Matrix, post: &Matrix, upstream: &mut Matrix) {
    let cols = upstream.cols();
    let pre = pre.as_slice();
    let post = post.as_slice();
    parallel::for_each_row_block(upstream.as_mut_slice(), cols, |first_row, block| {
        let start = first_row * cols;
        let z = &pre[start..start + block.len()];
        let a = &post[start..start + block.len()];
        for ((g, &z), &a) in block.iter_mut().zip(z).zip(a) {
            *g *= kind.derivative(z, a);
        }
    });
}

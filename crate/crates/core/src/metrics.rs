//! Image, volume and waveform quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn mse(pred: &Matrix, reference: &Matrix) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(Error::shape("mse", pred.shape(), reference.shape()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `10·log10(peak²/MSE)` over every entry; `+∞` when the inputs are identical.
pub fn psnr(pred: &Matrix, reference: &Matrix, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Domain(format!("psnr peak must be positive, got {peak}")));
    }
    let m = mse(pred, reference)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable Gaussian filter keeping only positions where the window fits.
fn filter_valid(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (vr, vc) = (rows + 1 - SSIM_WINDOW, cols + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; rows * vc];
    for r in 0..rows {
        let row = &img[r * cols..(r + 1) * cols];
        for c in 0..vc {
            horiz[r * vc + c] = w.iter().zip(&row[c..c + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; vr * vc];
    for r in 0..vr {
        for c in 0..vc {
            out[r * vc + c] = w.iter().enumerate().map(|(k, a)| a * horiz[(r + k) * vc + c]).sum();
        }
    }
    out
}

/// Mean structural similarity of two single-channel images, Gaussian 11×11 window with
/// σ = 1.5, averaged over the valid (unpadded) region.
pub fn ssim(pred: &Matrix, reference: &Matrix, peak: f64) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(Error::shape("ssim", pred.shape(), reference.shape()));
    }
    let (rows, cols) = pred.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Domain(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {rows}x{cols}"
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::Domain(format!("ssim peak must be positive, got {peak}")));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let w = gaussian_window();
    let x = pred.as_slice();
    let y = reference.as_slice();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, rows, cols, &w);
    let my = filter_valid(y, rows, cols, &w);
    let sxx = filter_valid(&xx, rows, cols, &w);
    let syy = filter_valid(&yy, rows, cols, &w);
    let sxy = filter_valid(&xy, rows, cols, &w);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cov + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / mx.len() as f64)
}

/// Intersection over union of the "inside" class (values below `threshold`).
pub fn iou(pred: &Matrix, reference: &Matrix, threshold: f64) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(Error::shape("iou", pred.shape(), reference.shape()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.as_slice().iter().zip(reference.as_slice()) {
        let (ia, ib) = (a < threshold, b < threshold);
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// One metric value of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub method: String,
    pub metric: String,
    #[serde(with = "float_or_marker")]
    pub value: f64,
    pub config_hash: String,
}

/// FNV-1a over the bytes of `text`, as 16 hex digits.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Number(f64),
    Marker(String),
}

fn to_repr(v: f64) -> Repr {
    if v.is_nan() {
        Repr::Marker("NaN".into())
    } else if v == f64::INFINITY {
        Repr::Marker("inf".into())
    } else if v == f64::NEG_INFINITY {
        Repr::Marker("-inf".into())
    } else {
        Repr::Number(v)
    }
}

fn from_repr<E: serde::de::Error>(r: Repr) -> std::result::Result<f64, E> {
    match r {
        Repr::Number(v) => Ok(v),
        Repr::Marker(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(E::custom(format!("unknown float marker {other:?}"))),
        },
    }
}

/// Serializes non-finite floats as the strings `"NaN"`, `"inf"` and `"-inf"`.
pub mod float_or_marker {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        super::from_repr(super::Repr::deserialize(d)?)
    }
}

/// [`float_or_marker`] for every value of a string-keyed map.
pub mod float_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let reprs: BTreeMap<&String, super::Repr> = m.iter().map(|(k, v)| (k, super::to_repr(*v))).collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        BTreeMap::<String, super::Repr>::deserialize(d)?
            .into_iter()
            .map(|(k, r)| super::from_repr(r).map(|v| (k, v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::shepp_logan;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn psnr_values() {
        let a = Matrix::filled(4, 4, 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 1.0);
        assert!(psnr(&a, &b, 1.0).unwrap().abs() < 1e-12);
        let c = a.map(|v| v + 0.1);
        assert!((psnr(&a, &c, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(psnr(&a, &Matrix::zeros(2, 8), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let img = shepp_logan(32).unwrap();
        assert_eq!(ssim(&img, &img, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let (c1v, c2v) = (0.3, 0.7);
        let a = Matrix::filled(16, 16, c1v);
        let b = Matrix::filled(16, 16, c2v);
        let cc1 = (SSIM_K1 * 1.0f64).powi(2);
        let expected = (2.0 * c1v * c2v + cc1) / (c1v * c1v + c2v * c2v + cc1);
        assert!((ssim(&a, &b, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_heavy_noise_is_low() {
        let img = shepp_logan(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noisy = Matrix::from_fn(64, 64, |r, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            img[(r, c)] + z
        });
        let s = ssim(&noisy, &img, 1.0).unwrap();
        assert!(s < 0.5, "ssim {s}");
        assert!(ssim(&Matrix::zeros(10, 10), &Matrix::zeros(10, 10), 1.0).is_err());
    }

    #[test]
    fn ssim_window_sums_to_one() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[10]);
    }

    #[test]
    fn iou_cases() {
        let a = Matrix::from_fn(4, 4, |_, c| if c < 2 { 0.0 } else { 1.0 });
        assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
        let b = a.map(|v| 1.0 - v);
        assert_eq!(iou(&a, &b, 0.5).unwrap(), 0.0);
        let full = Matrix::zeros(4, 4);
        assert_eq!(iou(&a, &full, 0.5).unwrap(), 0.5);
        let empty = Matrix::filled(4, 4, 1.0);
        assert_eq!(iou(&empty, &empty, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn markers_round_trip() {
        let r = MetricReport {
            task: "fit".into(),
            method: "siren".into(),
            metric: "psnr".into(),
            value: f64::NAN,
            config_hash: config_hash("{}"),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"NaN\""));
        let back: MetricReport = serde_json::from_str(&s).unwrap();
        assert!(back.value.is_nan());
        let inf = MetricReport { value: f64::INFINITY, ..r.clone() };
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&inf).unwrap()).unwrap();
        assert_eq!(back.value, f64::INFINITY);
        let fin = MetricReport { value: 31.5, ..r };
        assert!(serde_json::to_string(&fin).unwrap().contains("31.5"));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(config_hash(""), "cbf29ce484222325");
        assert_eq!(config_hash("a"), "af63dc4c8601ec8c");
    }

    fn image(seed: u64, n: usize) -> Matrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn symmetric_and_bounded(sa in 0u64..1000, sb in 0u64..1000) {
            let (a, b) = (image(sa, 16), image(sb, 16));
            let s = ssim(&a, &b, 1.0).unwrap();
            prop_assert_eq!(s, ssim(&b, &a, 1.0).unwrap());
            prop_assert!((-1.0..=1.0).contains(&s));
            let i = iou(&a, &b, 0.5).unwrap();
            prop_assert_eq!(i, iou(&b, &a, 0.5).unwrap());
            prop_assert!((0.0..=1.0).contains(&i));
        }

        #[test]
        fn psnr_scale_invariant(sa in 0u64..1000, sb in 0u64..1000, k in 0.01f64..100.0) {
            let (a, b) = (image(sa, 8), image(sb, 8));
            let base = psnr(&a, &b, 1.0).unwrap();
            let scaled = psnr(&a.scale(k), &b.scale(k), k).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }
    }
}

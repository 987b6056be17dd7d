use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Below this rate draws use exact inversion; above it a rounded normal.
const INVERSION_LIMIT: f64 = 30.0;

fn poisson_draw(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (lambda + lambda.sqrt() * z + 0.5).floor().max(0.0)
    }
}

/// Photon-counting noise: each pixel `p` becomes `k / (photons·time)` with
/// `k ~ Poisson(p·photons·time)`. Pixels are drawn in row-major order from one seeded
/// stream.
pub fn poisson_photon_noise(image: &Matrix, max_photons: f64, integration_time: f64, seed: u64) -> Result<Matrix> {
    if !(max_photons > 0.0 && integration_time > 0.0) || !max_photons.is_finite() || !integration_time.is_finite() {
        return Err(Error::Domain(format!(
            "photon count and integration time must be positive, got {max_photons} and {integration_time}"
        )));
    }
    let scale = max_photons * integration_time;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = image
        .as_slice()
        .iter()
        .map(|p| poisson_draw(&mut rng, p.clamp(0.0, 1.0) * scale) / scale)
        .collect();
    Matrix::from_vec(image.rows(), image.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pixels_stay_zero() {
        let out = poisson_photon_noise(&Matrix::zeros(8, 8), 30.0, 2.0, 3).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn many_photons_approach_input() {
        let img = Matrix::from_fn(16, 16, |r, c| ((r * 16 + c) as f64 / 255.0).min(1.0));
        let out = poisson_photon_noise(&img, 1e6, 1.0, 11).unwrap();
        assert!(img.max_abs_diff(&out).unwrap() < 0.01);
    }

    #[test]
    fn mean_matches_poisson_rate() {
        let n = 10_000;
        let img = Matrix::filled(n, 1, 0.5);
        let out = poisson_photon_noise(&img, 30.0, 2.0, 5).unwrap();
        let mean = out.sum() / n as f64;
        // Output variance is λ/scale² with λ = 30, scale = 60.
        let sigma = 30f64.sqrt() / 60.0;
        assert!((mean - 0.5).abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn inversion_branch_mean_and_variance() {
        let n = 20_000;
        let img = Matrix::filled(n, 1, 0.1);
        let out = poisson_photon_noise(&img, 30.0, 2.0, 8).unwrap();
        let counts: Vec<f64> = out.as_slice().iter().map(|v| v * 60.0).collect();
        assert!(counts.iter().all(|c| (c - c.round()).abs() < 1e-9));
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 6.0).abs() < 3.0 * (6.0f64 / n as f64).sqrt());
        assert!((var - 6.0).abs() < 0.4, "variance {var}");
    }

    #[test]
    fn seeded_and_reproducible() {
        let img = Matrix::filled(10, 10, 0.4);
        let a = poisson_photon_noise(&img, 30.0, 2.0, 1).unwrap();
        assert_eq!(a, poisson_photon_noise(&img, 30.0, 2.0, 1).unwrap());
        assert_ne!(a, poisson_photon_noise(&img, 30.0, 2.0, 2).unwrap());
        assert!(poisson_photon_noise(&img, 0.0, 2.0, 1).is_err());
    }
}

//! Numerical checks of the series behind the Gaussian window: the coefficients `A_n`,
//! power reduction of `cosⁿθ`, and `Σ A_n cosⁿ(2x) = exp(−cos²x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest order for which `1/(2ⁿ n!)` stays within the normal/subnormal f64 range.
pub const MAX_ORDER: usize = 150;

/// `A_n` truncated to `j ≤ inner_cap`:
/// `Σ_j (−1)^{n+j} / (2^{n+j} n! j!) = (−1)ⁿ/(2ⁿ n!) · Σ_j (−½)^j / j!`.
pub fn coefficient_a(n: usize, inner_cap: usize) -> Result<f64> {
    if n > MAX_ORDER {
        return Err(Error::Domain(format!("A_n is only evaluated for n <= {MAX_ORDER}, got {n}")));
    }
    if inner_cap == 0 {
        return Err(Error::Domain("inner_cap must be at least 1".into()));
    }
    let mut outer = 1.0;
    for k in 1..=n {
        outer *= -0.5 / k as f64;
    }
    let mut term = 1.0;
    let mut inner = 1.0;
    for j in 1..=inner_cap {
        term *= -0.5 / j as f64;
        inner += term;
    }
    Ok(outer * inner)
}

/// Closed form `(−1)ⁿ e^{−½} / (2ⁿ n!)` of the untruncated coefficient.
pub fn coefficient_a_closed(n: usize) -> f64 {
    let mut v = (-0.5f64).exp();
    for k in 1..=n {
        v *= -0.5 / k as f64;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCoefficients {
    pub order_cap: usize,
    pub inner_cap: usize,
    /// `A_0 ..= A_order_cap`.
    pub values: Vec<f64>,
}

impl SeriesCoefficients {
    pub fn new(order_cap: usize, inner_cap: usize) -> Result<SeriesCoefficients> {
        let values = (0..=order_cap)
            .map(|n| coefficient_a(n, inner_cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesCoefficients {
            order_cap,
            inner_cap,
            values,
        })
    }

    /// `Σ A_n cⁿ`, summed from `n = 0` upward.
    pub fn eval_power_series(&self, c: f64) -> f64 {
        let mut power = 1.0;
        let mut sum = 0.0;
        for &a in &self.values {
            sum += a * power;
            power *= c;
        }
        sum
    }
}

/// `cosⁿθ = dc + Σ amplitude·cos(kθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExpansion {
    pub n: usize,
    pub dc: f64,
    /// `(k, amplitude)` in ascending `k`.
    pub harmonics: Vec<(usize, f64)>,
}

impl HarmonicExpansion {
    pub fn eval(&self, theta: f64) -> f64 {
        self.dc
            + self
                .harmonics
                .iter()
                .map(|&(k, a)| a * (k as f64 * theta).cos())
                .sum::<f64>()
    }
}

/// Power reduction of `cosⁿθ`. Even `n`: `C(n, n/2)/2ⁿ + 2/2ⁿ Σ_{k<n/2} C(n,k) cos((n−2k)θ)`.
/// Odd `n` has no constant term and sums `k ≤ (n−1)/2`.
pub fn cosine_power_expand(n: usize) -> HarmonicExpansion {
    if n == 0 {
        return HarmonicExpansion {
            n,
            dc: 1.0,
            harmonics: Vec::new(),
        };
    }
    let scale = 0.5f64.powi(n as i32);
    let mut binom = 1.0;
    let mut harmonics = Vec::with_capacity(n / 2 + 1);
    let mut dc = 0.0;
    for k in 0..=n / 2 {
        let multiple = n - 2 * k;
        if multiple == 0 {
            dc = binom * scale;
        } else {
            harmonics.push((multiple, 2.0 * binom * scale));
        }
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    harmonics.reverse();
    HarmonicExpansion { n, dc, harmonics }
}

/// `Σ_{n ≤ order_cap} A_n cosⁿ(2x)` with `A_n` truncated at `inner_cap`.
pub fn partial_series(x: f64, order_cap: usize, inner_cap: usize) -> Result<f64> {
    Ok(SeriesCoefficients::new(order_cap, inner_cap)?.eval_power_series((2.0 * x).cos()))
}

/// Uniform grid of `points` values on `[−π, π]`.
pub fn theta_grid(points: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -PI + 2.0 * PI * i as f64 / (points - 1) as f64)
        .collect()
}

/// `max_x |partial_series(x) − exp(−cos²x)|` over a uniform grid on `[−π, π]`.
pub fn identity_residual(order_cap: usize, inner_cap: usize, grid_points: usize) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::Domain(format!("need at least 2 grid points, got {grid_points}")));
    }
    let coeffs = SeriesCoefficients::new(order_cap, inner_cap)?;
    Ok(theta_grid(grid_points)
        .into_iter()
        .map(|x| {
            let c = x.cos();
            (coeffs.eval_power_series((2.0 * x).cos()) - (-(c * c)).exp()).abs()
        })
        .fold(0.0, f64::max))
}

/// Outcome of the full invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub order_cap: usize,
    pub inner_cap: usize,
    pub grid: usize,
    pub residual: f64,
    /// Residual for each order cap `1..=order_cap`.
    pub residual_by_order: Vec<f64>,
    pub bound_violations: Vec<String>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.bound_violations.is_empty()
    }
}

/// Orders checked against the closed form and the power-reduction identity.
const CLOSED_FORM_ORDERS: usize = 20;
const BOUND_ORDERS: usize = 50;
const EXPANSION_ORDERS: usize = 12;

/// Runs every check; the residual itself is informational, violations are not.
pub fn verify_theory(order_cap: usize, inner_cap: usize, grid: usize) -> Result<TheoryReport> {
    let residual = identity_residual(order_cap, inner_cap, grid)?;
    let mut violations = Vec::new();

    for n in 0..=BOUND_ORDERS.max(order_cap).min(MAX_ORDER) {
        let a = coefficient_a(n, inner_cap)?;
        if a.abs() > 0.5f64.powi(n as i32) {
            violations.push(format!("|A_{n}| = {a:e} exceeds 2^-{n}"));
        }
        if n <= CLOSED_FORM_ORDERS {
            let closed = coefficient_a_closed(n);
            if (a - closed).abs() >= 1e-14 {
                violations.push(format!("A_{n} = {a:e} differs from closed form {closed:e}"));
            }
            if n > 0 && a.signum() != if n % 2 == 0 { 1.0 } else { -1.0 } {
                violations.push(format!("A_{n} has the wrong sign"));
            }
        }
    }

    let thetas = theta_grid(1000);
    for n in 0..=EXPANSION_ORDERS {
        let e = cosine_power_expand(n);
        let err = thetas
            .iter()
            .map(|&t| (e.eval(t) - t.cos().powi(n as i32)).abs())
            .fold(0.0, f64::max);
        if err >= 1e-12 {
            violations.push(format!("power reduction of cos^{n} off by {err:e}"));
        }
        let total = e.dc + e.harmonics.iter().map(|h| h.1).sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            violations.push(format!("cos^{n} expansion sums to {total} at zero"));
        }
        if e.harmonics.iter().any(|&(k, _)| k % 2 != n % 2) {
            violations.push(format!("cos^{n} expansion has a harmonic of the wrong parity"));
        }
    }

    let coeffs = SeriesCoefficients::new(order_cap, inner_cap)?;
    for &x in theta_grid(grid).iter() {
        let (p, m) = (coeffs.eval_power_series((2.0 * x).cos()), coeffs.eval_power_series((-2.0 * x).cos()));
        if p.to_bits() != m.to_bits() {
            violations.push(format!("series is not even at x = {x}"));
            break;
        }
    }

    let residual_by_order = (1..=order_cap)
        .map(|n| identity_residual(n, inner_cap, grid))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = residual_by_order.windows(2).position(|w| w[1] > w[0]) {
        violations.push(format!(
            "residual increases from order {} ({:e}) to {} ({:e})",
            i + 1,
            residual_by_order[i],
            i + 2,
            residual_by_order[i + 1]
        ));
    }

    Ok(TheoryReport {
        order_cap,
        inner_cap,
        grid,
        residual,
        residual_by_order,
        bound_violations: violations,
    })
}

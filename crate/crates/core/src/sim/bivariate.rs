//! Bivariate normal probabilities for the latent-threshold paired generator.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::normal::{normal_quantile, phi};

const SIMPSON_INTERVALS: usize = 400;

/// P(Z₁ ≤ a, Z₂ ≤ b) for standard bivariate normal with correlation r.
///
/// Integrates ∂Φ₂/∂r = φ₂(a, b; r) from 0 to r after substituting r = sin θ,
/// which removes the singularity at |r| = 1.
pub fn bivariate_normal_cdf(a: f64, b: f64, r: f64) -> f64 {
    let base = phi(a) * phi(b);
    if r == 0.0 {
        return base;
    }
    let r = r.clamp(-1.0, 1.0);
    let upper = r.asin();
    let integrand = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(a * a - 2.0 * a * b * s + b * b) / (2.0 * c2)).exp() / (2.0 * PI)
    };
    let h = upper / SIMPSON_INTERVALS as f64;
    let mut acc = integrand(0.0) + integrand(upper);
    for k in 1..SIMPSON_INTERVALS {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(k as f64 * h);
    }
    (base + acc * h / 3.0).clamp(0.0, 1.0)
}

/// Probability that both threshold indicators 1{Z_j < Φ⁻¹(p_j)} are 1.
pub fn joint_success(p1: f64, p2: f64, latent_r: f64) -> f64 {
    let a = normal_quantile(p1).expect("p1 in (0,1)");
    let b = normal_quantile(p2).expect("p2 in (0,1)");
    bivariate_normal_cdf(a, b, latent_r)
}

/// Correlation of two threshold indicators with marginals p1, p2.
pub fn indicator_correlation(p1: f64, p2: f64, latent_r: f64) -> f64 {
    let cov = joint_success(p1, p2, latent_r) - p1 * p2;
    cov / (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt()
}

/// Latent correlation whose threshold indicators have correlation `target`.
pub fn latent_correlation(p1: f64, p2: f64, target: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!("marginal probability {p} must lie in (0,1)")));
        }
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    let (c_lo, c_hi) = (indicator_correlation(p1, p2, lo), indicator_correlation(p1, p2, hi));
    if !(c_lo..=c_hi).contains(&target) {
        return Err(Error::Config(format!(
            "within-pair correlation {target} is outside the attainable range [{c_lo:.4}, {c_hi:.4}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if indicator_correlation(p1, p2, mid) < target { lo = mid } else { hi = mid }
    }
    Ok(0.5 * (lo + hi))
}

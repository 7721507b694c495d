//! Standard normal distribution: density, CDF and quantile.
//!
//! The CDF is evaluated through the complementary error function from
//! `libm` (a port of the FreeBSD/musl `erfc`, accurate to about one ulp),
//! which keeps relative accuracy deep in both tails. The quantile uses
//! Acklam's rational approximation (relative error below 1.2e-9) followed
//! by a single Newton step against the CDF.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(z).
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF Φ(z).
///
/// Rejects non-finite input. Use [`phi`] where ±∞ should map to the limits.
pub fn normal_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("normal_cdf requires a finite argument, got {z}")));
    }
    Ok(phi(z))
}

/// Infallible Φ(z); ±∞ map to 1 and 0, NaN propagates.
#[inline]
pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile Φ⁻¹(q) for q in (0, 1).
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("normal_quantile requires q in (0,1), got {q}")));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    // Refine in the lower half and reflect, so the Newton residual is
    // computed where Φ has full relative precision.
    let (p, sign) = if q < 0.5 { (q, 1.0) } else { (1.0 - q, -1.0) };
    let x0 = acklam(p);
    let density = normal_pdf(x0);
    let x = if density > 0.0 { x0 - (phi(x0) - p) / density } else { x0 };
    Ok(sign * x)
}

/// Acklam's approximation for p in (0, 0.5].
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Reference Φ built independently of `erfc`: Marsaglia's positive-term
    /// series Φ(z) = ½ + φ(z)·Σ z^(2k+1)/(2k+1)!! near the centre and a
    /// backward-evaluated Laplace continued fraction in the tails.
    fn reference_cdf(z: f64) -> f64 {
        if z.abs() <= 5.0 {
            let x = z.abs();
            let mut term = x;
            let mut sum = x;
            let mut k = 1.0;
            while term > 1e-300 && k < 500.0 {
                term *= x * x / (2.0 * k + 1.0);
                sum += term;
                k += 1.0;
            }
            let upper = 0.5 + normal_pdf(x) * sum;
            if z >= 0.0 { upper } else { 1.0 - upper }
        } else {
            let x = z.abs();
            let mut frac = x;
            for k in (1..=300).rev() {
                frac = x + k as f64 / frac;
            }
            let tail = normal_pdf(x) / frac;
            if z < 0.0 { tail } else { 1.0 - tail }
        }
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
    }

    #[test]
    fn cdf_at_upper_975_point() {
        assert_abs_diff_eq!(normal_cdf(1.959964).unwrap(), 0.975, epsilon = 1e-6);
    }

    #[test]
    fn cdf_far_left_tail() {
        let v = normal_cdf(-8.0).unwrap();
        assert!(v > 0.0 && v < 1e-15, "{v}");
        assert!((v - reference_cdf(-8.0)).abs() / v < 1e-12);
    }

    #[test]
    fn cdf_matches_reference_on_grid() {
        let mut z = -10.0;
        while z <= 10.0 {
            let got = normal_cdf(z).unwrap();
            let want = reference_cdf(z);
            assert!((got - want).abs() <= 1e-12, "z={z}: {got} vs {want}");
            z += 0.01;
        }
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(normal_cdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
        assert_eq!(phi(f64::INFINITY), 1.0);
        assert_eq!(phi(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(normal_quantile(0.975).unwrap(), 1.959964, epsilon = 1e-6);
        assert_abs_diff_eq!(normal_quantile(0.8).unwrap(), 0.841621, epsilon = 1e-6);
    }

    #[test]
    fn quantile_rejects_boundary() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(q).is_err(), "{q}");
        }
    }

    #[test]
    fn quantile_deep_tail() {
        let x = normal_quantile(1e-300).unwrap();
        assert!((reference_cdf(x) - 1e-300).abs() / 1e-300 < 1e-9);
    }

    proptest! {
        #[test]
        fn cdf_is_symmetric(z in -30.0f64..30.0) {
            let s = normal_cdf(z).unwrap() + normal_cdf(-z).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn cdf_is_monotone(z in -30.0f64..30.0, dz in 0.0f64..1.0) {
            prop_assert!(normal_cdf(z + dz).unwrap() >= normal_cdf(z).unwrap());
        }

        #[test]
        fn quantile_inverts_cdf(q in 1e-12f64..(1.0 - 1e-12)) {
            let x = normal_quantile(q).unwrap();
            prop_assert!((normal_cdf(x).unwrap() - q).abs() <= 1e-10);
        }

        #[test]
        fn quantile_is_odd(q in 1e-9f64..0.5) {
            let lo = normal_quantile(q).unwrap();
            let hi = normal_quantile(1.0 - q).unwrap();
            prop_assert!((lo + hi).abs() <= 1e-7 * lo.abs().max(1.0));
        }
    }
}

//! Test-level inputs shared by every design and the variance threshold S².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{normal_quantile, phi};

/// Level, target power, effect size and null value of a two-sided Wald test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    pub alpha: f64,
    pub target_power: f64,
    pub delta: f64,
    #[serde(default)]
    pub theta0: f64,
}

impl DesignInputs {
    pub fn new(alpha: f64, target_power: f64, delta: f64) -> Result<Self> {
        let d = DesignInputs { alpha, target_power, delta, theta0: 0.0 };
        d.validate()?;
        Ok(d)
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.target_power > 0.0 && self.target_power < 1.0) {
            return Err(Error::invalid(
                "power",
                format!("must lie in (0,1), got {}", self.target_power),
            ));
        }
        if self.target_power <= self.alpha {
            return Err(Error::invalid("power", "target power must exceed alpha"));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        if !self.theta0.is_finite() {
            return Err(Error::invalid("theta0", "must be finite"));
        }
        Ok(())
    }

    /// z_{1-α/2}.
    pub fn z_alpha(&self) -> f64 {
        normal_quantile(1.0 - self.alpha / 2.0).expect("alpha validated")
    }

    /// z_{1-β}.
    pub fn z_beta(&self) -> f64 {
        normal_quantile(self.target_power).expect("power validated")
    }
}

/// The largest estimator variance compatible with the target power.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct VarianceThreshold {
    pub s2: f64,
}

/// S² = (Δ / (z_{1-α/2} + z_{1-β}))².
pub fn variance_threshold(d: &DesignInputs) -> Result<VarianceThreshold> {
    d.validate()?;
    let s = d.delta / (d.z_alpha() + d.z_beta());
    Ok(VarianceThreshold { s2: s * s })
}

/// Two-sided Wald power with both tails retained:
/// Φ(−z + |Δ|/√v) + Φ(−z − |Δ|/√v).
///
/// A zero variance with a nonzero effect gives power 1.
pub fn wald_power(variance: f64, delta: f64, alpha: f64) -> f64 {
    let z = normal_quantile(1.0 - alpha / 2.0).expect("alpha in (0,1)");
    let shift = if delta == 0.0 { 0.0 } else { delta.abs() / variance.max(0.0).sqrt() };
    phi(-z + shift) + phi(-z - shift)
}

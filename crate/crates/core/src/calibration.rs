//! Planning inputs: the second-order moments of (Y, f) and the routes that
//! produce them from reported metrics or from a pilot sample.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};

/// Relative slack allowed on Cauchy–Schwarz for rounded inputs.
const CS_SLACK: f64 = 1e-12;

/// Outcome variance, prediction variance and their covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub var_y: f64,
    pub var_f: f64,
    pub cov_yf: f64,
    /// Set when the moments were built from an MSE lower bound.
    #[serde(default)]
    pub conservative: bool,
}

impl MomentSet {
    pub fn new(var_y: f64, var_f: f64, cov_yf: f64) -> Result<Self> {
        let m = MomentSet { var_y, var_f, cov_yf, conservative: false };
        m.validate()?;
        Ok(m)
    }

    /// Canonical representation with σ²_f = σ²_Y and Cov = σ²_Y·ρ.
    pub fn from_correlation(var_y: f64, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::invalid("rho", format!("must lie in [-1,1], got {rho}")));
        }
        MomentSet::new(var_y, var_y, var_y * rho)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("var_y", self.var_y), ("var_f", self.var_f), ("cov_yf", self.cov_yf)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if self.var_y < 0.0 {
            return Err(Error::invalid("var_y", "must be nonnegative"));
        }
        if self.var_f < 0.0 {
            return Err(Error::invalid("var_f", "must be nonnegative"));
        }
        let bound = self.var_y * self.var_f;
        if self.cov_yf * self.cov_yf > bound * (1.0 + CS_SLACK) + f64::MIN_POSITIVE {
            return Err(Error::invalid(
                "cov_yf",
                format!("Cov² = {} exceeds σ²_Y·σ²_f = {bound}", self.cov_yf * self.cov_yf),
            ));
        }
        Ok(())
    }

    /// ρ_Yf, or 0 when either variance vanishes.
    pub fn rho(&self) -> f64 {
        let denom = (self.var_y * self.var_f).sqrt();
        if denom > 0.0 { (self.cov_yf / denom).clamp(-1.0, 1.0) } else { 0.0 }
    }

    pub fn rho2(&self) -> f64 {
        let r = self.rho();
        r * r
    }

    /// σ²_ε = σ²_Y + σ²_f − 2 Cov(Y, f).
    pub fn var_eps(&self) -> f64 {
        (self.var_y + self.var_f - 2.0 * self.cov_yf).max(0.0)
    }

    /// Cov²/σ²_f, the part of σ²_Y the predictions can explain.
    pub fn explained(&self) -> f64 {
        if self.var_f > 0.0 { self.cov_yf * self.cov_yf / self.var_f } else { 0.0 }
    }

    /// σ²_Y(1 − ρ²), computed without forming ρ.
    pub fn residual_floor(&self) -> f64 {
        (self.var_y - self.explained()).max(0.0)
    }
}

/// Prevalence and classifier operating point for a binary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub prevalence: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl BinaryMetrics {
    pub fn new(prevalence: f64, sensitivity: f64, specificity: f64) -> Self {
        BinaryMetrics { prevalence, sensitivity, specificity }
    }

    /// P(f = 1) = se·p + (1 − sp)(1 − p).
    pub fn prediction_prevalence(&self) -> f64 {
        self.sensitivity * self.prevalence + (1.0 - self.specificity) * (1.0 - self.prevalence)
    }
}

/// Moments of a binary outcome and a binary classifier.
pub fn calibrate_binary(m: BinaryMetrics) -> Result<MomentSet> {
    for (field, v) in [
        ("p", m.prevalence),
        ("se", m.sensitivity),
        ("sp", m.specificity),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(field, format!("must lie in [0,1], got {v}")));
        }
    }
    let p = m.prevalence;
    if p == 0.0 || p == 1.0 {
        return Err(Error::DegenerateOutcome(p));
    }
    let p_f = m.prediction_prevalence();
    let var_y = p * (1.0 - p);
    let var_f = p_f * (1.0 - p_f);
    // se·p − p·p_f = p(1−p)(se + sp − 1), written so that se + sp = 1 gives
    // exactly zero and Cauchy–Schwarz holds without rounding slack.
    let cov_yf = var_y * (m.sensitivity + m.specificity - 1.0);
    Ok(MomentSet { var_y, var_f, cov_yf, conservative: false })
}

/// The accuracy summary reported for a continuous predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousMetric {
    /// Held-out R², taken as ρ²_Yf.
    R2(f64),
    /// Mean squared error σ²_ε; yields a conservative lower bound on ρ².
    Mse(f64),
}

/// Canonical moments for a continuous outcome from R² or MSE.
///
/// Only σ²_Y and ρ² enter the one-sample formulas, so the canonical set uses
/// σ²_f = σ²_Y and Cov = σ²_Y·ρ with ρ ≥ 0.
pub fn calibrate_continuous(var_y: f64, metric: ContinuousMetric) -> Result<MomentSet> {
    if !(var_y > 0.0 && var_y.is_finite()) {
        return Err(Error::invalid("sigma2", format!("must be positive, got {var_y}")));
    }
    let (rho2, conservative) = match metric {
        ContinuousMetric::R2(r2) => {
            if !(0.0..=1.0).contains(&r2) {
                return Err(Error::invalid("r2", format!("must lie in [0,1], got {r2}")));
            }
            (r2, false)
        }
        ContinuousMetric::Mse(mse) => {
            if !(mse >= 0.0 && mse.is_finite()) {
                return Err(Error::invalid("mse", format!("must be nonnegative, got {mse}")));
            }
            ((1.0 - mse / var_y).max(0.0), true)
        }
    };
    let mut m = MomentSet::from_correlation(var_y, rho2.sqrt())?;
    m.conservative = conservative;
    Ok(m)
}

/// Paired (y, f) observations from a pilot split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSample {
    pairs: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

impl PilotSample {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::invalid("pilot", "need at least two pairs"));
        }
        if let Some(i) = pairs.iter().position(|(y, f)| !y.is_finite() || !f.is_finite()) {
            return Err(Error::invalid("pilot", format!("pair {i} is not finite")));
        }
        Ok(PilotSample { pairs, group: None })
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn group(&self) -> Option<&str> {
        self.group.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parse a two-column CSV with header `y,f`. Row numbers in errors count
    /// the header as row 1.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Csv { row: 1, message: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "y" || &headers[1] != "f" {
            return Err(Error::Csv {
                row: 1,
                message: format!("expected header `y,f`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Csv { row, message: e.to_string() })?;
            if rec.len() != 2 {
                return Err(Error::Csv { row, message: format!("expected 2 fields, got {}", rec.len()) });
            }
            let parse = |s: &str, col: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Csv { row, message: format!("column `{col}`: cannot parse `{s}`") })?;
                if !v.is_finite() {
                    return Err(Error::Csv { row, message: format!("column `{col}` is not finite") });
                }
                Ok(v)
            };
            pairs.push((parse(&rec[0], "y")?, parse(&rec[1], "f")?));
        }
        if pairs.len() < 2 {
            return Err(Error::Csv { row: pairs.len() + 2, message: "need at least two data rows".into() });
        }
        PilotSample::new(pairs)
    }
}

/// Unbiased sample moments, without degeneracy checks.
pub(crate) fn sample_moments(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    // Welford-style single pass.
    let mut mean_y = 0.0;
    let mut mean_f = 0.0;
    let mut m2_y = 0.0;
    let mut m2_f = 0.0;
    let mut c_yf = 0.0;
    for (k, &(y, f)) in pairs.iter().enumerate() {
        let k = (k + 1) as f64;
        let dy = y - mean_y;
        let df = f - mean_f;
        mean_y += dy / k;
        mean_f += df / k;
        m2_y += dy * (y - mean_y);
        m2_f += df * (f - mean_f);
        c_yf += dy * (f - mean_f);
    }
    let denom = (pairs.len() as f64 - 1.0).max(1.0);
    (m2_y / denom, m2_f / denom, c_yf / denom)
}

/// Sample moments of a pilot with the (length − 1) denominator.
pub fn estimate_moments(pilot: &PilotSample) -> Result<MomentSet> {
    let (var_y, var_f, cov_yf) = sample_moments(&pilot.pairs);
    if var_y <= 0.0 {
        return Err(Error::DegenerateMoment { column: "y" });
    }
    if var_f <= 0.0 {
        return Err(Error::DegenerateMoment { column: "f" });
    }
    // Pull rounding excursions back inside Cauchy–Schwarz.
    let bound = (var_y * var_f).sqrt();
    let cov_yf = cov_yf.clamp(-bound, bound);
    Ok(MomentSet { var_y, var_f, cov_yf, conservative: false })
}

/// A tuning weight together with any fallback that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tuning {
    pub lambda: f64,
    pub warning: Option<Warning>,
}

/// Optional clamp applied to plug-in tuning weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaClamp {
    pub lo: f64,
    pub hi: f64,
}

/// λ̂ = Ĉov/((1 + r)·σ̂²_f) from pilot moments. Not clamped.
pub fn plugin_lambda(pilot: &PilotSample, r: f64) -> Result<Tuning> {
    plugin_lambda_clamped(pilot, r, None)
}

pub fn plugin_lambda_clamped(pilot: &PilotSample, r: f64, clamp: Option<LambdaClamp>) -> Result<Tuning> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("must be a nonnegative ratio, got {r}")));
    }
    let (_, var_f, cov) = sample_moments(&pilot.pairs);
    let mut t = lambda_from_moments(cov, var_f, r);
    if let Some(c) = clamp {
        t.lambda = t.lambda.clamp(c.lo, c.hi);
    }
    Ok(t)
}

pub(crate) fn lambda_from_moments(cov: f64, var_f: f64, r: f64) -> Tuning {
    if var_f > 0.0 {
        Tuning { lambda: cov / ((1.0 + r) * var_f), warning: None }
    } else {
        Tuning { lambda: 0.0, warning: Some(Warning::ZeroPredictionVariance) }
    }
}

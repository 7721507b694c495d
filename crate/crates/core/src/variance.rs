//! Asymptotic variances of rectified estimators as functions of population
//! moments and the labeled/unlabeled budget.

use serde::{Deserialize, Serialize};

use crate::calibration::{lambda_from_moments, MomentSet, Tuning};
use crate::error::{Error, Result};

/// Size of the unlabeled prediction pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Finite(u64),
    /// The N → ∞ limit, where r = n/N = 0.
    Unbounded,
}

impl Pool {
    pub fn finite(self) -> Option<u64> {
        match self {
            Pool::Finite(n) => Some(n),
            Pool::Unbounded => None,
        }
    }

    /// r = n/N for a (possibly fractional) labeled count.
    pub fn ratio(self, n: f64) -> f64 {
        match self {
            Pool::Finite(big) => n / big as f64,
            Pool::Unbounded => 0.0,
        }
    }

    /// 1/N, zero in the unbounded limit.
    pub fn inv(self) -> f64 {
        match self {
            Pool::Finite(big) => 1.0 / big as f64,
            Pool::Unbounded => 0.0,
        }
    }

    pub fn validate(self) -> Result<()> {
        if self == Pool::Finite(0) {
            return Err(Error::invalid("N", "unlabeled pool must hold at least one observation"));
        }
        Ok(())
    }
}

/// Labeled count n, unlabeled pool N and two-group allocation κ = n₁/n₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub n: f64,
    pub pool: Pool,
    #[serde(default = "one")]
    pub kappa: f64,
}

fn one() -> f64 {
    1.0
}

impl SampleBudget {
    pub fn new(n: u64, pool: Pool) -> Result<Self> {
        let b = SampleBudget { n: n as f64, pool, kappa: 1.0 };
        b.validate()?;
        Ok(b)
    }

    /// A budget with a fractional labeled count, used by root finders.
    pub fn continuous(n: f64, pool: Pool) -> Self {
        SampleBudget { n, pool, kappa: 1.0 }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) {
            return Err(Error::invalid("n", "labeled sample size must be at least 1"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "allocation ratio must be positive"));
        }
        self.pool.validate()
    }

    pub fn r(&self) -> f64 {
        self.pool.ratio(self.n)
    }
}

/// Variance of the λ-weighted estimator:
/// σ²_Y/n + λ²σ²_f(1/N + 1/n) − 2λ·Cov/n.
pub fn ppi_pp_variance(m: &MomentSet, b: &SampleBudget, lambda: f64) -> f64 {
    let n = b.n;
    m.var_y / n + lambda * lambda * m.var_f * (b.pool.inv() + 1.0 / n) - 2.0 * lambda * m.cov_yf / n
}

/// Variance-minimizing weight Cov/((1 + r)σ²_f); 0 with a warning when σ²_f = 0.
pub fn lambda_star(m: &MomentSet, b: &SampleBudget) -> Tuning {
    lambda_from_moments(m.cov_yf, m.var_f, b.r())
}

/// Variance at the optimal weight: σ²_Y/n − (Cov²/σ²_f)·N/(n(n + N)).
pub fn optimal_variance(m: &MomentSet, b: &SampleBudget) -> f64 {
    let n = b.n;
    // N/(n(n+N)) = 1/(n(1+r)) also covers the unbounded pool.
    m.var_y / n - m.explained() / (n * (1.0 + b.r()))
}

/// Variance of vanilla PPI (λ = 1): σ²_f/N + σ²_ε/n.
pub fn vanilla_variance(m: &MomentSet, b: &SampleBudget) -> f64 {
    m.var_f * b.pool.inv() + m.var_eps() / b.n
}

/// One arm of a two-group design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupArm {
    pub moments: MomentSet,
    pub budget: SampleBudget,
}

/// Independent groups A and B, each with its own moments and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupMoments {
    pub a: GroupArm,
    pub b: GroupArm,
}

/// Variance of the difference of group estimators at group-specific optimal
/// weights: the sum of the two one-sample optimal variances.
pub fn two_sample_variance(t: &TwoGroupMoments) -> Result<f64> {
    for arm in [&t.a, &t.b] {
        arm.moments.validate()?;
        arm.budget.validate()?;
    }
    Ok(optimal_variance(&t.a.moments, &t.a.budget) + optimal_variance(&t.b.moments, &t.b.budget))
}

/// Paired design: the one-sample optimal variance applied to the moments of
/// the differences (D, G) = (Y^A − Y^B, f^A − f^B).
pub fn paired_variance(m_diff: &MomentSet, b: &SampleBudget) -> f64 {
    optimal_variance(m_diff, b)
}

/// Effect measure in a 2×2 table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "RR", alias = "rr")]
    RelativeRisk,
    #[serde(rename = "OR", alias = "or")]
    OddsRatio,
}

/// Event probabilities and outcome–prediction correlations for groups 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoByTwoSpec {
    pub p0: f64,
    pub p1: f64,
    pub rho0: f64,
    pub rho1: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    pub measure: Measure,
}

impl TwoByTwoSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, p) in [("p0", self.p0), ("p1", self.p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(field, format!("must lie in (0,1), got {p}")));
            }
            if p == 0.0 || p == 1.0 {
                return Err(Error::DegenerateOutcome(p));
            }
        }
        for (field, r) in [("rho0", self.rho0), ("rho1", self.rho1)] {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::invalid(field, format!("must lie in [-1,1], got {r}")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "allocation ratio must be positive"));
        }
        Ok(())
    }

    /// Effect on the log scale: log RR or log OR.
    pub fn log_effect(&self) -> f64 {
        match self.measure {
            Measure::RelativeRisk => (self.p1 / self.p0).ln(),
            Measure::OddsRatio => logit(self.p1) - logit(self.p0),
        }
    }

    /// Per-label variance contributions of groups 0 and 1 (before allocation).
    pub fn group_terms(&self) -> (f64, f64) {
        let per_group = |p: f64, rho: f64| {
            let shrink = 1.0 - rho * rho;
            match self.measure {
                Measure::RelativeRisk => (1.0 - p) * shrink / p,
                Measure::OddsRatio => shrink / (p * (1.0 - p)),
            }
        };
        (per_group(self.p0, self.rho0), per_group(self.p1, self.rho1))
    }

    /// n₀·Var of the log effect, i.e. the bracket in the large-N variance.
    pub fn unit_variance(&self) -> f64 {
        let (g0, g1) = self.group_terms();
        g0 + g1 / self.kappa
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Large-N delta-method variance of log RR̂ with n₀ control labels.
pub fn log_rr_variance(s: &TwoByTwoSpec, n0: f64) -> Result<f64> {
    log_effect_variance(&TwoByTwoSpec { measure: Measure::RelativeRisk, ..*s }, n0)
}

/// Large-N delta-method variance of log OR̂ with n₀ control labels.
pub fn log_or_variance(s: &TwoByTwoSpec, n0: f64) -> Result<f64> {
    log_effect_variance(&TwoByTwoSpec { measure: Measure::OddsRatio, ..*s }, n0)
}

pub fn log_effect_variance(s: &TwoByTwoSpec, n0: f64) -> Result<f64> {
    s.validate()?;
    if !(n0 > 0.0) {
        return Err(Error::invalid("n0", "must be positive"));
    }
    Ok(s.unit_variance() / n0)
}

/// Contrast-level score variances V_YY, V_ff and cross term V_Yf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastBlocks {
    pub v_yy: f64,
    pub v_ff: f64,
    pub v_yf: f64,
}

impl ContrastBlocks {
    pub fn new(v_yy: f64, v_ff: f64, v_yf: f64) -> Result<Self> {
        let c = ContrastBlocks { v_yy, v_ff, v_yf };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        // Blocks are exactly a MomentSet in contrast units.
        self.as_moments().validate().map_err(|e| match e {
            Error::InvalidInput { field, message } => Error::InvalidInput {
                field: match field {
                    "var_y" => "v_yy",
                    "var_f" => "v_ff",
                    _ => "v_yf",
                },
                message,
            },
            other => other,
        })
    }

    fn as_moments(&self) -> MomentSet {
        MomentSet { var_y: self.v_yy, var_f: self.v_ff, cov_yf: self.v_yf, conservative: false }
    }

    /// V_YY − V²_Yf/V_ff.
    pub fn residual_floor(&self) -> f64 {
        self.as_moments().residual_floor()
    }
}

/// (V_YY + λ²(1 + r)V_ff − 2λV_Yf)/n.
pub fn contrast_variance(c: &ContrastBlocks, b: &SampleBudget, lambda: f64) -> f64 {
    (c.v_yy + lambda * lambda * (1.0 + b.r()) * c.v_ff - 2.0 * lambda * c.v_yf) / b.n
}

/// V_Yf/((1 + r)V_ff), falling back to 0 when V_ff = 0.
pub fn contrast_lambda_star(c: &ContrastBlocks, b: &SampleBudget) -> Tuning {
    lambda_from_moments(c.v_yf, c.v_ff, b.r())
}

/// (V_YY − V²_Yf/((1 + r)V_ff))/n.
pub fn contrast_optimal_variance(c: &ContrastBlocks, b: &SampleBudget) -> f64 {
    optimal_variance(&c.as_moments(), b)
}

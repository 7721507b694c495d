//! Power curves and labeled-sample-size inversions.
//!
//! Inversions use the one-term planning criterion `Var(n) ≤ S²` (the far
//! tail Φ term is dropped), while every reported power keeps both tails.
//! Each returned `n*` is the smallest integer meeting the criterion, floored
//! at 1, so the two-term power at `n*` is at least the target.

use serde::Serialize;

use crate::calibration::MomentSet;
use crate::design::{variance_threshold, wald_power, DesignInputs};
use crate::error::{Error, Result, Warning};
use crate::variance::{
    contrast_lambda_star, contrast_optimal_variance, lambda_star, optimal_variance, vanilla_variance,
    ContrastBlocks, Pool, SampleBudget, TwoByTwoSpec,
};

/// Relative slack in the `Var ≤ S²` comparison, absorbing rounding when a
/// root lands exactly on an integer.
const THRESHOLD_SLACK: f64 = 1e-12;

/// Upper limit on any returned labeled count.
const MAX_N: u64 = 1 << 53;

/// Outcome of a sample-size inversion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    /// Labeled count (group A or control group 0 for two-group designs).
    pub n_star: u64,
    /// Labeled count of the second group, when there is one.
    pub n_star_other: Option<u64>,
    /// Two-tailed Wald power at `n_star`.
    pub analytic_power: f64,
    /// Estimator variance at `n_star`.
    pub variance: f64,
    pub lambda_star: Option<f64>,
    pub lambda_star_other: Option<f64>,
    pub classical_n: u64,
    /// 1 − n*/classical_n. Negative when the method needs more labels than
    /// the classical design (possible for vanilla PPI).
    pub reduction: f64,
    /// n* exceeds the unlabeled pool.
    pub pool_exhausted: bool,
    pub warnings: Vec<Warning>,
}

/// Estimator family an inversion plans for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Classical,
    #[serde(alias = "ppi")]
    Vanilla,
    #[serde(rename = "ppi++", alias = "ppi_pp")]
    PpiPlusPlus,
}

/// Whether a variance meets the threshold under the planning criterion.
#[inline]
pub fn meets_threshold(variance: f64, s2: f64) -> bool {
    variance <= s2 * (1.0 + THRESHOLD_SLACK)
}

/// Smallest integer n ≥ 1 satisfying a monotone predicate, starting from an
/// estimate of the real-valued root and correcting for rounding.
fn smallest_from_root(root: f64, pred: impl Fn(u64) -> bool) -> u64 {
    let mut n = if root.is_finite() { root.ceil().clamp(1.0, MAX_N as f64) as u64 } else { MAX_N };
    while n > 1 && pred(n - 1) {
        n -= 1;
    }
    while n < MAX_N && !pred(n) {
        n += 1;
    }
    n
}

/// Smallest integer in [1, hi] satisfying a monotone predicate that holds at hi.
fn smallest_by_bisection(hi: u64, pred: impl Fn(u64) -> bool) -> u64 {
    let (mut lo, mut hi) = (1u64, hi.max(1));
    if pred(lo) {
        return lo;
    }
    // Invariant: !pred(lo) && pred(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) { hi = mid } else { lo = mid }
    }
    hi
}

/// Positive root of S²n² + (S²N − V)n − N·F = 0, the finite-pool inversion of
/// V/n − (V − F)/(n(1 + n/N)) ≤ S². F is the large-N residual floor.
fn quadratic_root(s2: f64, total: f64, floor: f64, pool: Pool) -> f64 {
    match pool {
        Pool::Unbounded => floor / s2,
        Pool::Finite(big) => {
            let big = big as f64;
            let b = total - s2 * big;
            let c = big * floor;
            let disc = (b * b + 4.0 * s2 * c).sqrt();
            if b >= 0.0 {
                (b + disc) / (2.0 * s2)
            } else {
                // Avoid cancellation when S²N dominates.
                2.0 * c / (disc - b)
            }
        }
    }
}

fn threshold_for(d: &DesignInputs) -> Result<f64> {
    let s2 = variance_threshold(d)?.s2;
    if d.delta == 0.0 || s2 == 0.0 {
        return Err(Error::UnattainablePower);
    }
    Ok(s2)
}

fn reduction(n_star: u64, classical: u64) -> f64 {
    if classical > 0 { 1.0 - n_star as f64 / classical as f64 } else { 0.0 }
}

fn exhausted(n: u64, pool: Pool) -> bool {
    pool.finite().is_some_and(|big| n > big)
}

/// Classical two-sided Wald power with labeled data only.
pub fn classical_power(n: u64, var_y: f64, d: &DesignInputs) -> f64 {
    wald_power(var_y / n as f64, d.delta, d.alpha)
}

/// ⌈σ²_Y/S²⌉, floored at 1.
pub fn classical_n(var_y: f64, d: &DesignInputs) -> Result<u64> {
    if !(var_y >= 0.0 && var_y.is_finite()) {
        return Err(Error::invalid("sigma2", "must be nonnegative"));
    }
    let s2 = threshold_for(d)?;
    Ok(smallest_from_root(var_y / s2, |n| meets_threshold(var_y / n as f64, s2)))
}

/// Power of the optimally tuned estimator.
pub fn ppi_pp_power(m: &MomentSet, b: &SampleBudget, d: &DesignInputs) -> f64 {
    wald_power(optimal_variance(m, b), d.delta, d.alpha)
}

/// Power of vanilla PPI (λ = 1).
pub fn vanilla_power(m: &MomentSet, b: &SampleBudget, d: &DesignInputs) -> f64 {
    wald_power(vanilla_variance(m, b), d.delta, d.alpha)
}

fn validate_mean_inputs(m: &MomentSet, pool: Pool, d: &DesignInputs) -> Result<()> {
    m.validate()?;
    pool.validate()?;
    d.validate()
}

/// Smallest labeled n for the optimally tuned estimator with a fixed pool.
pub fn ppi_pp_n(m: &MomentSet, pool: Pool, d: &DesignInputs) -> Result<PlanResult> {
    validate_mean_inputs(m, pool, d)?;
    let s2 = threshold_for(d)?;
    let variance = |n: u64| optimal_variance(m, &SampleBudget::continuous(n as f64, pool));
    let root = quadratic_root(s2, m.var_y, m.residual_floor(), pool);
    let n_star = smallest_from_root(root, |n| meets_threshold(variance(n), s2));
    let budget = SampleBudget::continuous(n_star as f64, pool);
    let tuning = lambda_star(m, &budget);
    let classical = classical_n(m.var_y, d)?;
    Ok(PlanResult {
        n_star,
        n_star_other: None,
        analytic_power: ppi_pp_power(m, &budget, d),
        variance: variance(n_star),
        lambda_star: Some(tuning.lambda),
        lambda_star_other: None,
        classical_n: classical,
        reduction: reduction(n_star, classical),
        pool_exhausted: exhausted(n_star, pool),
        warnings: tuning.warning.into_iter().collect(),
    })
}

/// Smallest labeled n for vanilla PPI: ⌈σ²_ε/(S² − σ²_f/N)⌉.
pub fn vanilla_ppi_n(m: &MomentSet, pool: Pool, d: &DesignInputs) -> Result<PlanResult> {
    validate_mean_inputs(m, pool, d)?;
    let s2 = threshold_for(d)?;
    let headroom = s2 - m.var_f * pool.inv();
    if headroom <= 0.0 {
        return Err(Error::Infeasible {
            pool: pool.finite().unwrap_or(0),
            min_pool: min_pool_for(m.var_f, s2),
        });
    }
    let variance = |n: u64| vanilla_variance(m, &SampleBudget::continuous(n as f64, pool));
    let n_star = smallest_from_root(m.var_eps() / headroom, |n| meets_threshold(variance(n), s2));
    let budget = SampleBudget::continuous(n_star as f64, pool);
    let classical = classical_n(m.var_y, d)?;
    Ok(PlanResult {
        n_star,
        n_star_other: None,
        analytic_power: vanilla_power(m, &budget, d),
        variance: variance(n_star),
        lambda_star: Some(1.0),
        lambda_star_other: None,
        classical_n: classical,
        reduction: reduction(n_star, classical),
        pool_exhausted: exhausted(n_star, pool),
        warnings: Vec::new(),
    })
}

/// Smallest N with σ²_f/N < S².
fn min_pool_for(var_f: f64, s2: f64) -> u64 {
    let q = var_f / s2;
    let mut big = q.floor().max(0.0) as u64 + 1;
    while big > 1 && var_f / ((big - 1) as f64) < s2 {
        big -= 1;
    }
    while var_f / big as f64 >= s2 {
        big += 1;
    }
    big
}

/// Classical plan for a mean design, in the same result shape.
pub fn classical_plan(var_y: f64, pool: Pool, d: &DesignInputs) -> Result<PlanResult> {
    d.validate()?;
    let n_star = classical_n(var_y, d)?;
    Ok(PlanResult {
        n_star,
        n_star_other: None,
        analytic_power: classical_power(n_star, var_y, d),
        variance: var_y / n_star as f64,
        lambda_star: Some(0.0),
        lambda_star_other: None,
        classical_n: n_star,
        reduction: 0.0,
        pool_exhausted: exhausted(n_star, pool),
        warnings: Vec::new(),
    })
}

/// Plan a one-sample (or paired) mean design for the chosen estimator.
pub fn plan_mean(m: &MomentSet, pool: Pool, d: &DesignInputs, estimator: Estimator) -> Result<PlanResult> {
    match estimator {
        Estimator::Classical => {
            m.validate()?;
            pool.validate()?;
            classical_plan(m.var_y, pool, d)
        }
        Estimator::Vanilla => vanilla_ppi_n(m, pool, d),
        Estimator::PpiPlusPlus => ppi_pp_n(m, pool, d),
    }
}

/// Approximate ratio n_PPI/n_cl ≈ 1 − ρ² in the large-pool regime.
pub fn rule_of_thumb(rho2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho2) {
        return Err(Error::invalid("rho2", format!("must lie in [0,1], got {rho2}")));
    }
    Ok(1.0 - rho2)
}

/// Deviation of the exact (real-valued) ratio n_PPI/n_cl from 1 − ρ².
///
/// Uses the unrounded roots so the comparison is free of ceiling effects.
pub fn rule_of_thumb_error(var_y: f64, rho2: f64, pool: Pool, d: &DesignInputs) -> Result<f64> {
    let m = MomentSet::from_correlation(var_y, rho2.sqrt())?;
    let s2 = threshold_for(d)?;
    let ppi = quadratic_root(s2, m.var_y, m.residual_floor(), pool);
    let classical = var_y / s2;
    Ok(ppi / classical - rule_of_thumb(rho2)?)
}

/// Paired design: the one-sample inversion on difference moments.
pub fn paired_n(m_diff: &MomentSet, pool: Pool, d: &DesignInputs) -> Result<PlanResult> {
    ppi_pp_n(m_diff, pool, d)
}

/// Two independent groups with per-group moments and unlabeled pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TwoSampleDesign {
    pub a: MomentSet,
    pub b: MomentSet,
    pub pool_a: Pool,
    pub pool_b: Pool,
    /// Allocation κ = n_B/n_A; 1 is balanced.
    pub kappa: f64,
}

impl TwoSampleDesign {
    pub fn balanced(a: MomentSet, b: MomentSet, pool: Pool) -> Self {
        TwoSampleDesign { a, b, pool_a: pool, pool_b: pool, kappa: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.b.validate()?;
        self.pool_a.validate()?;
        self.pool_b.validate()?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "allocation ratio must be positive"));
        }
        Ok(())
    }

    /// Group-B count implied by a group-A count.
    pub fn n_b(&self, n_a: u64) -> u64 {
        kappa_scale(self.kappa, n_a)
    }

    fn budgets(&self, n_a: u64) -> (SampleBudget, SampleBudget) {
        (
            SampleBudget::continuous(n_a as f64, self.pool_a),
            SampleBudget::continuous(self.n_b(n_a) as f64, self.pool_b),
        )
    }

    /// Variance of the group difference for the chosen estimator.
    pub fn variance(&self, n_a: u64, estimator: Estimator) -> f64 {
        let (ba, bb) = self.budgets(n_a);
        match estimator {
            Estimator::Classical => self.a.var_y / ba.n + self.b.var_y / bb.n,
            Estimator::Vanilla => vanilla_variance(&self.a, &ba) + vanilla_variance(&self.b, &bb),
            Estimator::PpiPlusPlus => optimal_variance(&self.a, &ba) + optimal_variance(&self.b, &bb),
        }
    }

    pub fn power(&self, n_a: u64, d: &DesignInputs, estimator: Estimator) -> f64 {
        wald_power(self.variance(n_a, estimator), d.delta, d.alpha)
    }
}

/// Group sizes for a two-sample comparison.
///
/// The finite-pool variance is not a single quadratic once the groups differ,
/// so the smallest n_A is found by bisection on the exact variance between 1
/// and the classical requirement (which always satisfies the criterion).
pub fn two_sample_n(t: &TwoSampleDesign, d: &DesignInputs, estimator: Estimator) -> Result<PlanResult> {
    t.validate()?;
    d.validate()?;
    let s2 = threshold_for(d)?;
    let classical_pred = |n: u64| meets_threshold(t.variance(n, Estimator::Classical), s2);
    let classical_root = (t.a.var_y + t.b.var_y / t.kappa) / s2;
    let classical = smallest_from_root(classical_root, classical_pred);

    let pred = |n: u64| meets_threshold(t.variance(n, estimator), s2);
    let n_a = match estimator {
        Estimator::Classical => classical,
        Estimator::PpiPlusPlus => smallest_by_bisection(classical, pred),
        Estimator::Vanilla => {
            let floor = t.a.var_f * t.pool_a.inv() + t.b.var_f * t.pool_b.inv();
            if floor >= s2 {
                // Scaling both pools by a common factor c gives floor/c < S².
                let scale = floor / s2;
                let need = |pool: Pool| pool.finite().map_or(0, |big| (big as f64 * scale).floor() as u64 + 1);
                return Err(Error::Infeasible {
                    pool: t.pool_a.finite().unwrap_or(0),
                    min_pool: need(t.pool_a).max(need(t.pool_b)),
                });
            }
            let mut hi = classical.max(1);
            while !pred(hi) {
                hi = hi.saturating_mul(2).min(MAX_N);
            }
            smallest_by_bisection(hi, pred)
        }
    };
    let (ba, bb) = t.budgets(n_a);
    let n_b = t.n_b(n_a);
    let (lam_a, lam_b, warnings) = match estimator {
        Estimator::Classical => (0.0, 0.0, Vec::new()),
        Estimator::Vanilla => (1.0, 1.0, Vec::new()),
        Estimator::PpiPlusPlus => {
            let ta = lambda_star(&t.a, &ba);
            let tb = lambda_star(&t.b, &bb);
            (ta.lambda, tb.lambda, ta.warning.into_iter().chain(tb.warning).collect())
        }
    };
    Ok(PlanResult {
        n_star: n_a,
        n_star_other: Some(n_b),
        analytic_power: t.power(n_a, d, estimator),
        variance: t.variance(n_a, estimator),
        lambda_star: Some(lam_a),
        lambda_star_other: Some(lam_b),
        classical_n: classical,
        reduction: reduction(n_a, classical),
        pool_exhausted: exhausted(n_a, t.pool_a) || exhausted(n_b, t.pool_b),
        warnings,
    })
}

/// Power of the log-RR/log-OR Wald test with n₀ and n₁ labels (large-N form).
pub fn two_by_two_power(s: &TwoByTwoSpec, n0: u64, n1: u64, alpha: f64) -> Result<f64> {
    s.validate()?;
    let variance = two_by_two_variance(s, n0, n1);
    Ok(wald_power(variance, s.log_effect(), alpha))
}

fn two_by_two_variance(s: &TwoByTwoSpec, n0: u64, n1: u64) -> f64 {
    let (g0, g1) = s.group_terms();
    g0 / n0 as f64 + g1 / n1 as f64
}

/// Labeled counts (n₀, n₁ = ⌈κ n₀⌉) for a relative-risk or odds-ratio test.
/// The effect size is derived from (p₀, p₁); `d.delta` is ignored.
pub fn two_by_two_n(s: &TwoByTwoSpec, d: &DesignInputs) -> Result<PlanResult> {
    s.validate()?;
    if s.p0 == s.p1 {
        return Err(Error::UnattainablePower);
    }
    let d = d.with_delta(s.log_effect());
    let s2 = threshold_for(&d)?;
    let invert = |spec: &TwoByTwoSpec| {
        let unit = spec.unit_variance();
        smallest_from_root(unit / s2, |n| meets_threshold(unit / n as f64, s2))
    };
    let n0 = invert(s);
    let classical = invert(&TwoByTwoSpec { rho0: 0.0, rho1: 0.0, ..*s });
    let n1 = kappa_scale(s.kappa, n0);
    Ok(PlanResult {
        n_star: n0,
        n_star_other: Some(n1),
        analytic_power: two_by_two_power(s, n0, n1, d.alpha)?,
        variance: two_by_two_variance(s, n0, n1),
        lambda_star: None,
        lambda_star_other: None,
        classical_n: classical,
        reduction: reduction(n0, classical),
        pool_exhausted: false,
        warnings: Vec::new(),
    })
}

/// Second-group count ⌈κ·n₀⌉, at least 1.
pub fn kappa_scale(kappa: f64, n0: u64) -> u64 {
    let scaled = kappa * n0 as f64;
    // Tolerate representation error in κ before taking the ceiling.
    let rounded = scaled.round();
    if (scaled - rounded).abs() <= 1e-9 * scaled.max(1.0) {
        (rounded as u64).max(1)
    } else {
        (scaled.ceil() as u64).max(1)
    }
}

/// Power of a regression contrast at the optimal weight.
pub fn regression_contrast_power(c: &ContrastBlocks, b: &SampleBudget, d: &DesignInputs) -> f64 {
    wald_power(contrast_optimal_variance(c, b), d.delta, d.alpha)
}

/// Smallest labeled n for a GLM contrast a'β with contrast blocks `c`.
pub fn regression_contrast_n(c: &ContrastBlocks, pool: Pool, d: &DesignInputs) -> Result<PlanResult> {
    c.validate()?;
    pool.validate()?;
    d.validate()?;
    let s2 = threshold_for(d)?;
    let variance = |n: u64| contrast_optimal_variance(c, &SampleBudget::continuous(n as f64, pool));
    let root = quadratic_root(s2, c.v_yy, c.residual_floor(), pool);
    let n_star = smallest_from_root(root, |n| meets_threshold(variance(n), s2));
    let budget = SampleBudget::continuous(n_star as f64, pool);
    let tuning = contrast_lambda_star(c, &budget);
    let classical = smallest_from_root(c.v_yy / s2, |n| meets_threshold(c.v_yy / n as f64, s2));
    Ok(PlanResult {
        n_star,
        n_star_other: None,
        analytic_power: regression_contrast_power(c, &budget, d),
        variance: variance(n_star),
        lambda_star: Some(tuning.lambda),
        lambda_star_other: None,
        classical_n: classical,
        reduction: reduction(n_star, classical),
        pool_exhausted: exhausted(n_star, pool),
        warnings: tuning.warning.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate_binary, BinaryMetrics};
    use crate::variance::Measure;
    use approx::assert_abs_diff_eq;

    fn design(delta: f64) -> DesignInputs {
        DesignInputs::new(0.05, 0.8, delta).unwrap()
    }

    fn mom(rho: f64) -> MomentSet {
        MomentSet::from_correlation(1.0, rho).unwrap()
    }

    /// Linear scan for the smallest n with Var(n) ≤ S².
    fn scan(s2: f64, var: impl Fn(u64) -> f64) -> u64 {
        (1..10_000_000).find(|&n| var(n) <= s2 * (1.0 + 1e-12)).unwrap()
    }

    #[test]
    fn classical_power_examples() {
        let d = design(0.2);
        assert_abs_diff_eq!(classical_power(197, 1.0, &design(0.0)), 0.05, epsilon = 1e-12);
        let p = classical_power(197, 1.0, &d);
        assert_abs_diff_eq!(p, 0.801, epsilon = 1e-3);
        assert!(classical_power(1_000_000_000, 1.0, &d) > 1.0 - 1e-12);
    }

    #[test]
    fn classical_n_examples() {
        assert_eq!(classical_n(1.0, &design(0.2)).unwrap(), 197);
        assert_eq!(classical_n(2.0, &design(0.3)).unwrap(), 175);
        assert_eq!(classical_n(1.0, &design(0.3)).unwrap(), 88);
        assert_eq!(classical_n(1.0, &design(0.0)), Err(Error::UnattainablePower));
    }

    #[test]
    fn ppi_power_examples() {
        let d = design(0.2);
        let b = SampleBudget::new(102, Pool::Finite(5000)).unwrap();
        assert_eq!(ppi_pp_power(&mom(0.0), &b, &d), classical_power(102, 1.0, &d));
        assert_abs_diff_eq!(ppi_pp_power(&mom(0.7), &b, &d), 0.80, epsilon = 5e-3);
        assert_abs_diff_eq!(ppi_pp_power(&mom(0.7), &b, &design(0.0)), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn ppi_n_examples() {
        let d = design(0.2);
        assert_eq!(ppi_pp_n(&mom(0.7), Pool::Finite(5000), &d).unwrap().n_star, 102);
        assert_eq!(ppi_pp_n(&mom(0.0), Pool::Finite(5000), &d).unwrap().n_star, 197);
        let s2 = variance_threshold(&d).unwrap().s2;
        let m = mom(0.9);
        let scanned = scan(s2, |n| optimal_variance(&m, &SampleBudget::continuous(n as f64, Pool::Finite(500))));
        let plan = ppi_pp_n(&m, Pool::Finite(500), &d).unwrap();
        assert_eq!(plan.n_star, scanned);
        assert_eq!(plan.n_star, 53);
        assert!(!plan.pool_exhausted);
        assert_eq!(ppi_pp_n(&m, Pool::Finite(500), &design(0.0)), Err(Error::UnattainablePower));
    }

    #[test]
    fn pool_exhaustion_flagged() {
        let plan = ppi_pp_n(&mom(0.5), Pool::Finite(20), &design(0.2)).unwrap();
        assert!(plan.pool_exhausted);
        assert!(plan.n_star > 20);
    }

    #[test]
    fn vanilla_examples() {
        let m = MomentSet::new(1.0, 1.0, 0.7).unwrap();
        assert_eq!(vanilla_ppi_n(&m, Pool::Finite(5000), &design(0.2)).unwrap().n_star, 123);
        assert_eq!(vanilla_ppi_n(&m, Pool::Finite(5000), &design(0.3)).unwrap().n_star, 54);
        let perfect = MomentSet::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(vanilla_ppi_n(&perfect, Pool::Finite(5000), &design(0.2)).unwrap().n_star, 1);
        // S² = 0.005096 ≤ 1/100: infeasible, minimal N = 197.
        match vanilla_ppi_n(&m, Pool::Finite(100), &design(0.2)) {
            Err(Error::Infeasible { pool, min_pool }) => {
                assert_eq!(pool, 100);
                assert_eq!(min_pool, 197);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rule_of_thumb_values() {
        assert_eq!(rule_of_thumb(0.5).unwrap(), 0.5);
        assert_eq!(rule_of_thumb(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(rule_of_thumb(0.9).unwrap(), 0.1, epsilon = 1e-15);
        assert!(rule_of_thumb(1.5).is_err());
    }

    #[test]
    fn two_sample_examples() {
        let d = design(0.3);
        let t = TwoSampleDesign::balanced(mom(0.7), mom(0.7), Pool::Finite(5000));
        let plan = two_sample_n(&t, &d, Estimator::PpiPlusPlus).unwrap();
        assert_eq!((plan.n_star, plan.n_star_other), (91, Some(91)));
        assert_eq!(plan.classical_n, 175);
        assert_eq!(two_sample_n(&t, &d, Estimator::Vanilla).unwrap().n_star, 109);
        let t0 = TwoSampleDesign::balanced(mom(0.0), mom(0.0), Pool::Finite(5000));
        assert_eq!(two_sample_n(&t0, &d, Estimator::PpiPlusPlus).unwrap().n_star, 175);

        // One perfectly predicted group in the large-pool limit: only B contributes.
        let t = TwoSampleDesign::balanced(mom(1.0), mom(0.0), Pool::Unbounded);
        let s2 = variance_threshold(&d).unwrap().s2;
        let plan = two_sample_n(&t, &d, Estimator::PpiPlusPlus).unwrap();
        assert_eq!(plan.n_star, (1.0 / s2).ceil() as u64);
    }

    #[test]
    fn two_sample_large_pool_closed_form() {
        let d = design(0.3);
        let s2 = variance_threshold(&d).unwrap().s2;
        for (ra, rb) in [(0.5, 0.7), (0.9, 0.3), (0.6, 0.6)] {
            let t = TwoSampleDesign::balanced(mom(ra), mom(rb), Pool::Unbounded);
            let closed = ((1.0 - ra * ra) + (1.0 - rb * rb)) / s2;
            assert_eq!(two_sample_n(&t, &d, Estimator::PpiPlusPlus).unwrap().n_star, closed.ceil() as u64);
        }
    }

    #[test]
    fn two_sample_unbalanced_scan() {
        let d = design(0.3);
        let s2 = variance_threshold(&d).unwrap().s2;
        let t = TwoSampleDesign { kappa: 2.0, pool_b: Pool::Finite(800), ..TwoSampleDesign::balanced(mom(0.6), mom(0.8), Pool::Finite(300)) };
        let plan = two_sample_n(&t, &d, Estimator::PpiPlusPlus).unwrap();
        assert_eq!(plan.n_star, scan(s2, |n| t.variance(n, Estimator::PpiPlusPlus)));
        assert_eq!(plan.n_star_other, Some(2 * plan.n_star));
    }

    #[test]
    fn paired_examples() {
        let d = design(0.3);
        assert_eq!(paired_n(&mom(0.7), Pool::Finite(5000), &d).unwrap().n_star, 45);
        assert_eq!(paired_n(&mom(0.0), Pool::Finite(5000), &d).unwrap().n_star, 88);
        assert_eq!(paired_n(&mom(0.7), Pool::Finite(5000), &d), ppi_pp_n(&mom(0.7), Pool::Finite(5000), &d));
    }

    #[test]
    fn two_by_two_examples() {
        let d = design(0.0);
        let s = TwoByTwoSpec { p0: 0.2, p1: 0.4, rho0: 0.0, rho1: 0.0, kappa: 1.0, measure: Measure::RelativeRisk };
        let plan = two_by_two_n(&s, &d).unwrap();
        assert_eq!((plan.n_star, plan.n_star_other), (90, Some(90)));
        // Classical epidemiological log-RR sample size oracle.
        let z = 1.959_963_984_540_054 + 0.841_621_233_572_914_3;
        let oracle = z * z * (0.8 / 0.2 + 0.6 / 0.4) / (2.0f64).ln().powi(2);
        assert_eq!(plan.n_star, oracle.ceil() as u64);

        let r0 = calibrate_binary(BinaryMetrics::new(0.2, 0.9, 0.9)).unwrap().rho();
        let r1 = calibrate_binary(BinaryMetrics::new(0.4, 0.9, 0.9)).unwrap().rho();
        assert_abs_diff_eq!(r0 * r0, 0.5325, epsilon = 1e-3);
        assert_abs_diff_eq!(r1 * r1, 0.6305, epsilon = 1e-3);
        let plan = two_by_two_n(&TwoByTwoSpec { rho0: r0, rho1: r1, ..s }, &d).unwrap();
        assert_eq!(plan.n_star, 40);
        assert_eq!(plan.classical_n, 90);

        let plan = two_by_two_n(&TwoByTwoSpec { rho0: 1.0, rho1: 1.0, ..s }, &d).unwrap();
        assert_eq!(plan.n_star, 1);
        assert_eq!(two_by_two_n(&TwoByTwoSpec { p1: 0.2, ..s }, &d), Err(Error::UnattainablePower));

        let plan = two_by_two_n(&TwoByTwoSpec { kappa: 1.5, measure: Measure::OddsRatio, ..s }, &d).unwrap();
        assert_eq!(plan.n_star_other, Some((1.5 * plan.n_star as f64).ceil() as u64));
    }

    #[test]
    fn regression_examples() {
        let d = design(0.3);
        let s2 = variance_threshold(&d).unwrap().s2;
        let c = ContrastBlocks::new(2.0, 2.0, 1.4).unwrap();
        let plan = regression_contrast_n(&c, Pool::Unbounded, &d).unwrap();
        assert_eq!(plan.n_star, 89);
        assert_eq!(plan.n_star, scan(s2, |n| 1.02 / n as f64));

        let c0 = ContrastBlocks::new(2.0, 2.0, 0.0).unwrap();
        assert_eq!(regression_contrast_n(&c0, Pool::Finite(500), &d).unwrap().n_star, (2.0 / s2).ceil() as u64);

        let m = MomentSet::new(1.3, 0.8, 0.6).unwrap();
        let c = ContrastBlocks::new(1.3, 0.8, 0.6).unwrap();
        let a = regression_contrast_n(&c, Pool::Finite(700), &d).unwrap();
        let b = ppi_pp_n(&m, Pool::Finite(700), &d).unwrap();
        assert_eq!(a.n_star, b.n_star);
        assert_eq!(a.variance, b.variance);
    }
}

//! Replicate loops, analytic comparators and the planning-check suites.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_binary, BinaryMetrics, MomentSet};
use crate::design::{wald_power, DesignInputs};
use crate::error::{Error, Result};
use crate::power::{plan_mean, regression_contrast_n, two_by_two_n, two_sample_n, Estimator, TwoSampleDesign};
use crate::sim::bivariate::{joint_success, latent_correlation};
use crate::sim::dgp::{generate, Cell, Dataset, MeanData, SimDesign};
use crate::sim::mean::{estimate_mean, wald_test, FoldModel, LambdaChoice, MeanEstimate};
use crate::sim::regression::{
    default_contrast, glm_reference_blocks, regression_crossfit_lambda, regression_plugin_lambda, rectified_solve,
    sandwich_se, Family,
};
use crate::sim::rng::{substream, Purpose};
use crate::variance::{
    contrast_lambda_star, contrast_optimal_variance, contrast_variance, lambda_star, optimal_variance, ppi_pp_variance,
    ContrastBlocks, Measure, Pool, SampleBudget, TwoByTwoSpec,
};

/// Which estimator the replicates use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// λ* from the population moments.
    Oracle,
    /// λ̂ from the labeled sample moments.
    Plugin,
    /// K-fold cross-fitted λ̂.
    Crossfit,
    /// λ = 0: labeled data only.
    Classical,
    /// λ = 1.
    Vanilla,
}

impl LambdaMode {
    pub fn name(self) -> &'static str {
        match self {
            LambdaMode::Oracle => "oracle",
            LambdaMode::Plugin => "plugin",
            LambdaMode::Crossfit => "crossfit",
            LambdaMode::Classical => "classical",
            LambdaMode::Vanilla => "vanilla",
        }
    }

    fn estimator(self) -> Estimator {
        match self {
            LambdaMode::Classical => Estimator::Classical,
            LambdaMode::Vanilla => Estimator::Vanilla,
            _ => Estimator::PpiPlusPlus,
        }
    }

    fn estimated(self) -> bool {
        matches!(self, LambdaMode::Plugin | LambdaMode::Crossfit)
    }
}

/// Run-level settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub replicates: u64,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
    pub folds: usize,
    /// Also run each cell under Δ = 0 and report the rejection rate.
    pub include_null: bool,
    /// Reference sample size for logistic contrast blocks.
    pub reference_size: usize,
}

impl RunOptions {
    pub fn new(replicates: u64, seed: u64, lambda_mode: LambdaMode) -> Self {
        RunOptions { replicates, seed, lambda_mode, folds: 2, include_null: false, reference_size: 100_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.lambda_mode == LambdaMode::Crossfit && self.folds < 2 {
            return Err(Error::Config("cross-fitting needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Population quantities of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Mean(MomentSet),
    TwoGroup(MomentSet, MomentSet),
    TwoByTwo { m0: MomentSet, m1: MomentSet, p0: f64, p1: f64, measure: Measure },
    Contrast(ContrastBlocks),
}

/// Moments of the within-pair differences (D, G) for the binary paired
/// generator: D = Y₁ − Y₂, G = f₁ − f₂ with f_j depending only on Y_j.
pub fn paired_binary_moments(p1: f64, p2: f64, within_corr: f64, accuracy: f64) -> Result<MomentSet> {
    let latent = latent_correlation(p1, p2, within_corr)?;
    let cov_y = joint_success(p1, p2, latent) - p1 * p2;
    let k = 2.0 * accuracy - 1.0;
    let var_d = p1 * (1.0 - p1) + p2 * (1.0 - p2) - 2.0 * cov_y;
    let g = |p: f64| (1.0 - accuracy) + k * p;
    let var_g = g(p1) * (1.0 - g(p1)) + g(p2) * (1.0 - g(p2)) - 2.0 * k * k * cov_y;
    Ok(MomentSet { var_y: var_d, var_f: var_g, cov_yf: k * var_d, conservative: false })
}

fn binary_moments(p: f64, accuracy: f64) -> Result<MomentSet> {
    calibrate_binary(BinaryMetrics::new(p, accuracy, accuracy))
}

/// Shared substream for logistic reference samples.
fn reference_blocks(cell: &Cell, opts: &RunOptions) -> Result<ContrastBlocks> {
    glm_reference_blocks(cell, opts.reference_size, &mut substream(opts.seed, 0, 0, Purpose::Reference))
}

pub fn truth(cell: &Cell, opts: &RunOptions) -> Result<Truth> {
    cell.validate()?;
    let (p1, p2) = cell.probabilities();
    let acc = cell.quality;
    Ok(match cell.design {
        SimDesign::OneSampleCont | SimDesign::PairedCont => Truth::Mean(MomentSet::from_correlation(1.0, cell.quality)?),
        SimDesign::OneSampleBin => Truth::Mean(binary_moments(p1, acc)?),
        SimDesign::PairedBin => Truth::Mean(paired_binary_moments(p1, p2, cell.within_pair_corr, acc)?),
        SimDesign::TwoSampleCont => {
            let m = MomentSet::from_correlation(1.0, cell.quality)?;
            Truth::TwoGroup(m, m)
        }
        SimDesign::TwoSampleBin => Truth::TwoGroup(binary_moments(p1, acc)?, binary_moments(p2, acc)?),
        SimDesign::TwoByTwoRr | SimDesign::TwoByTwoOr => Truth::TwoByTwo {
            m0: binary_moments(p1, acc)?,
            m1: binary_moments(p2, acc)?,
            p0: p1,
            p1: p2,
            measure: if cell.design == SimDesign::TwoByTwoRr { Measure::RelativeRisk } else { Measure::OddsRatio },
        },
        SimDesign::OlsContrast => Truth::Contrast(ContrastBlocks {
            v_yy: 2.0,
            v_ff: 2.0,
            v_yf: 2.0 * cell.quality,
        }),
        SimDesign::LogisticContrast => Truth::Contrast(reference_blocks(cell, opts)?),
    })
}

fn budget(n: u64, big_n: u64) -> SampleBudget {
    SampleBudget::continuous(n as f64, Pool::Finite(big_n))
}

fn group_variance(m: &MomentSet, b: &SampleBudget, mode: LambdaMode) -> f64 {
    match mode {
        LambdaMode::Classical => ppi_pp_variance(m, b, 0.0),
        LambdaMode::Vanilla => ppi_pp_variance(m, b, 1.0),
        _ => optimal_variance(m, b),
    }
}

fn effect_scale(p: f64, measure: Measure) -> f64 {
    match measure {
        Measure::RelativeRisk => p,
        Measure::OddsRatio => p * (1.0 - p),
    }
}

fn log_effect(p0: f64, p1: f64, measure: Measure) -> f64 {
    TwoByTwoSpec { p0, p1, rho0: 0.0, rho1: 0.0, kappa: 1.0, measure }.log_effect()
}

/// Analytic Wald variance and effect of a cell, at the finite pool sizes.
///
/// Tuned modes use the oracle variance; classical and vanilla modes use the
/// variance of their fixed weight.
pub fn analytic_variance(cell: &Cell, truth: &Truth, mode: LambdaMode) -> (f64, f64) {
    let b1 = budget(cell.n, cell.big_n);
    let b2 = budget(cell.n_other(), cell.big_n_second());
    match truth {
        Truth::Mean(m) => (group_variance(m, &b1, mode), cell.delta),
        Truth::TwoGroup(a, b) => (group_variance(a, &b1, mode) + group_variance(b, &b2, mode), cell.delta),
        Truth::TwoByTwo { m0, m1, p0, p1, measure } => {
            let v = group_variance(m0, &b1, mode) / effect_scale(*p0, *measure).powi(2)
                + group_variance(m1, &b2, mode) / effect_scale(*p1, *measure).powi(2);
            (v, log_effect(*p0, *p1, *measure))
        }
        Truth::Contrast(c) => {
            let v = match mode {
                LambdaMode::Classical => contrast_variance(c, &b1, 0.0),
                LambdaMode::Vanilla => contrast_variance(c, &b1, 1.0),
                _ => contrast_optimal_variance(c, &b1),
            };
            (v, cell.delta)
        }
    }
}

pub fn analytic_power(cell: &Cell, truth: &Truth, mode: LambdaMode) -> f64 {
    let (v, effect) = analytic_variance(cell, truth, mode);
    wald_power(v, effect, cell.alpha)
}

/// Oracle weight of the first group (or of the contrast).
pub fn oracle_lambda(cell: &Cell, truth: &Truth) -> f64 {
    let b = budget(cell.n, cell.big_n);
    match truth {
        Truth::Mean(m) | Truth::TwoGroup(m, _) | Truth::TwoByTwo { m0: m, .. } => lambda_star(m, &b).lambda,
        Truth::Contrast(c) => contrast_lambda_star(c, &b).lambda,
    }
}

fn choice_for(m: &MomentSet, n: usize, big_n: usize, opts: &RunOptions) -> LambdaChoice {
    match opts.lambda_mode {
        LambdaMode::Oracle => LambdaChoice::Fixed(lambda_star(m, &budget(n as u64, big_n as u64)).lambda),
        LambdaMode::Plugin => LambdaChoice::Plugin,
        LambdaMode::Crossfit => LambdaChoice::CrossFit { folds: opts.folds, model: FoldModel::LinearRecalibration },
        LambdaMode::Classical => LambdaChoice::Fixed(0.0),
        LambdaMode::Vanilla => LambdaChoice::Fixed(1.0),
    }
}

fn estimate_group<R: Rng + ?Sized>(data: &MeanData, m: &MomentSet, opts: &RunOptions, rng: &mut R) -> Result<MeanEstimate> {
    estimate_mean(data, choice_for(m, data.n(), data.big_n(), opts), rng)
}

/// Outcome of one replicate; `None` marks a dropped replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateOutcome {
    pub reject: bool,
    pub lambda: f64,
}

fn test_inputs(cell: &Cell, theta0: f64) -> DesignInputs {
    DesignInputs { alpha: cell.alpha, target_power: 0.5, delta: 0.0, theta0 }
}

/// Generate one dataset and run the cell's test on it.
pub fn replicate<R: Rng + ?Sized>(cell: &Cell, truth: &Truth, opts: &RunOptions, rng: &mut R) -> Result<Option<ReplicateOutcome>> {
    let data = generate(cell, rng)?;
    let outcome = match (&data, truth) {
        (Dataset::Mean(d), Truth::Mean(m)) => {
            let theta0 = if cell.design == SimDesign::OneSampleBin { cell.p_base } else { 0.0 };
            let e = estimate_group(d, m, opts, rng)?;
            let t = wald_test(e.estimate, e.variance, e.lambda, &test_inputs(cell, theta0));
            Some(ReplicateOutcome { reject: t.reject, lambda: e.lambda })
        }
        (Dataset::TwoGroup(a, b), Truth::TwoGroup(ma, mb)) => {
            let ea = estimate_group(a, ma, opts, rng)?;
            let eb = estimate_group(b, mb, opts, rng)?;
            let t = wald_test(ea.estimate - eb.estimate, ea.variance + eb.variance, ea.lambda, &test_inputs(cell, 0.0));
            Some(ReplicateOutcome { reject: t.reject, lambda: ea.lambda })
        }
        (Dataset::TwoGroup(g0, g1), Truth::TwoByTwo { m0, m1, measure, .. }) => {
            let e0 = estimate_group(g0, m0, opts, rng)?;
            let e1 = estimate_group(g1, m1, opts, rng)?;
            let inside = |p: f64| p > 0.0 && p < 1.0;
            if !(inside(e0.estimate) && inside(e1.estimate)) {
                None
            } else {
                let effect = log_effect(e0.estimate, e1.estimate, *measure);
                let var = e0.variance / effect_scale(e0.estimate, *measure).powi(2)
                    + e1.variance / effect_scale(e1.estimate, *measure).powi(2);
                let t = wald_test(effect, var, e0.lambda, &test_inputs(cell, 0.0));
                Some(ReplicateOutcome { reject: t.reject, lambda: e0.lambda })
            }
        }
        (Dataset::Regression(d), Truth::Contrast(c)) => {
            let family = Family::for_design(cell.design).expect("regression design");
            let a = default_contrast();
            match regression_test(d, family, c, &a, &test_inputs(cell, 0.0), opts, rng) {
                Ok(o) => Some(o),
                Err(Error::NotConverged { .. } | Error::Singular(_)) => None,
                Err(e) => return Err(e),
            }
        }
        _ => unreachable!("generator and truth disagree on design"),
    };
    Ok(outcome)
}

fn regression_test<R: Rng + ?Sized>(
    d: &crate::sim::dgp::RegressionData,
    family: Family,
    blocks: &ContrastBlocks,
    a: &DVector<f64>,
    inputs: &DesignInputs,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<ReplicateOutcome> {
    let lambda = match opts.lambda_mode {
        LambdaMode::Oracle => contrast_lambda_star(blocks, &budget(d.n() as u64, d.big_n() as u64)).lambda,
        LambdaMode::Plugin => regression_plugin_lambda(d, family, a)?,
        LambdaMode::Crossfit => regression_crossfit_lambda(d, family, a, opts.folds, rng)?,
        LambdaMode::Classical => 0.0,
        LambdaMode::Vanilla => 1.0,
    };
    let theta = rectified_solve(d, family, lambda)?;
    let se = sandwich_se(d, family, &theta, a, lambda)?;
    let t = wald_test(a.dot(&theta), se * se, lambda, inputs);
    Ok(ReplicateOutcome { reject: t.reject, lambda })
}

/// Aggregated results for one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub cell: Cell,
    pub lambda_mode: LambdaMode,
    pub replicates: u64,
    pub analytic_power: f64,
    pub empirical_power: f64,
    /// Rejection rate under Δ = 0, when null runs were requested.
    pub type1: Option<f64>,
    pub lambda_rmse: Option<f64>,
    /// √(p̂(1 − p̂)/R) over the retained replicates.
    pub mc_stderr: f64,
    pub n_dropped: u64,
    pub oracle_lambda: f64,
    /// Target power the cell was planned for, in inversion-type suites.
    pub target_power: Option<f64>,
}

impl SimRow {
    pub fn discrepancy(&self) -> f64 {
        (self.empirical_power - self.analytic_power).abs()
    }
}

struct Tally {
    rate: f64,
    retained: u64,
    dropped: u64,
    lambda_rmse: f64,
}

fn run_replicates(cell: &Cell, truth: &Truth, index: u64, purpose: Purpose, opts: &RunOptions) -> Result<Tally> {
    let oracle = oracle_lambda(cell, truth);
    let outcomes = (0..opts.replicates)
        .into_par_iter()
        .map(|rep| replicate(cell, truth, opts, &mut substream(opts.seed, index, rep, purpose)))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<ReplicateOutcome> = outcomes.iter().flatten().copied().collect();
    let retained = kept.len() as u64;
    let rejections = kept.iter().filter(|o| o.reject).count() as f64;
    let sq = kept.iter().map(|o| (o.lambda - oracle).powi(2)).sum::<f64>();
    let denom = (retained as f64).max(1.0);
    Ok(Tally {
        rate: rejections / denom,
        retained,
        dropped: opts.replicates - retained,
        lambda_rmse: (sq / denom).sqrt(),
    })
}

/// Simulate one cell. `index` keys the cell's random substreams.
pub fn run_cell(cell: &Cell, index: u64, opts: &RunOptions) -> Result<SimRow> {
    opts.validate()?;
    let truth = truth(cell, opts)?;
    let alt = run_replicates(cell, &truth, index, Purpose::Alternative, opts)?;
    let type1 = if cell.delta == 0.0 {
        Some(alt.rate)
    } else if opts.include_null {
        let null_cell = cell.with_delta(0.0);
        let null_truth = self::truth(&null_cell, opts)?;
        Some(run_replicates(&null_cell, &null_truth, index, Purpose::Null, opts)?.rate)
    } else {
        None
    };
    let p = alt.rate;
    Ok(SimRow {
        cell: *cell,
        lambda_mode: opts.lambda_mode,
        replicates: opts.replicates,
        analytic_power: analytic_power(cell, &truth, opts.lambda_mode),
        empirical_power: p,
        type1,
        lambda_rmse: opts.lambda_mode.estimated().then_some(alt.lambda_rmse),
        mc_stderr: (p * (1.0 - p) / (alt.retained as f64).max(1.0)).sqrt(),
        n_dropped: alt.dropped,
        oracle_lambda: oracle_lambda(cell, &truth),
        target_power: None,
    })
}

/// Simulate cells in order; cell i uses substream index i.
pub fn run_cells(cells: &[Cell], opts: &RunOptions) -> Result<Vec<SimRow>> {
    cells.iter().enumerate().map(|(i, c)| run_cell(c, i as u64, opts)).collect()
}

/// Full cross product of the grid axes, in n-major order.
pub fn grid_cells(template: &Cell, ns: &[u64], big_ns: &[u64], qualities: &[f64], deltas: &[f64]) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(ns.len() * big_ns.len() * qualities.len() * deltas.len());
    for &big_n in big_ns {
        for &quality in qualities {
            for &delta in deltas {
                for &n in ns {
                    cells.push(Cell { n, big_n, quality, delta, ..*template });
                }
            }
        }
    }
    cells
}

/// Labeled count the planner returns for a cell's design and truth.
pub fn planned_n(cell: &Cell, target_power: f64, mode: LambdaMode, opts: &RunOptions) -> Result<u64> {
    let truth = truth(cell, opts)?;
    let (_, effect) = analytic_variance(cell, &truth, mode);
    let d = DesignInputs::new(cell.alpha, target_power, effect)?;
    let estimator = mode.estimator();
    let pool = Pool::Finite(cell.big_n);
    let plan = match truth {
        Truth::Mean(m) => plan_mean(&m, pool, &d, estimator)?,
        Truth::TwoGroup(a, b) => {
            let t = TwoSampleDesign { a, b, pool_a: pool, pool_b: Pool::Finite(cell.big_n_second()), kappa: cell.kappa };
            two_sample_n(&t, &d, estimator)?
        }
        Truth::TwoByTwo { m0, m1, p0, p1, measure } => {
            if estimator != Estimator::PpiPlusPlus {
                return Err(Error::Config("2×2 planning is available for the tuned estimator only".into()));
            }
            let spec = TwoByTwoSpec { p0, p1, rho0: m0.rho(), rho1: m1.rho(), kappa: cell.kappa, measure };
            two_by_two_n(&spec, &d)?
        }
        Truth::Contrast(c) => {
            if estimator != Estimator::PpiPlusPlus {
                return Err(Error::Config("contrast planning is available for the tuned estimator only".into()));
            }
            regression_contrast_n(&c, pool, &d)?
        }
    };
    Ok(plan.n_star)
}

/// Cells placed at the planned n* for each target power and quality.
pub fn inversion_cells(
    template: &Cell,
    targets: &[f64],
    qualities: &[f64],
    mode: LambdaMode,
    opts: &RunOptions,
) -> Result<Vec<(Cell, f64)>> {
    let mut cells = Vec::new();
    for &target in targets {
        for &quality in qualities {
            let cell = Cell { quality, ..*template };
            let n = planned_n(&cell, target, mode, opts)?;
            cells.push((Cell { n: n.max(2), ..cell }, target));
        }
    }
    Ok(cells)
}

/// Cells planned under `rho_plan` but simulated at each true quality inside
/// (0.01, 0.99); values outside are skipped.
pub fn misspecified_cells(
    template: &Cell,
    target: f64,
    rho_plan: f64,
    rho_true: &[f64],
    opts: &RunOptions,
) -> Result<Vec<Cell>> {
    let n = planned_n(&Cell { quality: rho_plan, ..*template }, target, LambdaMode::Oracle, opts)?;
    Ok(rho_true
        .iter()
        .filter(|&&q| q > 0.01 && q < 0.99)
        .map(|&q| Cell { n: n.max(2), quality: q, ..*template })
        .collect())
}

/// Two-group cells splitting fixed labeled and unlabeled totals in the same
/// A:B proportion.
pub fn allocation_cells(template: &Cell, n_total: u64, big_n_total: u64, n_a: &[u64]) -> Result<Vec<Cell>> {
    if !template.design.is_two_group() {
        return Err(Error::Config("allocation suites need a two-group design".into()));
    }
    n_a.iter()
        .map(|&na| {
            if na < 2 || na + 2 > n_total {
                return Err(Error::Config(format!("group A size {na} leaves too few labels for group B")));
            }
            let big_a = big_n_total * na / n_total;
            Ok(Cell {
                n: na,
                kappa: (n_total - na) as f64 / na as f64,
                big_n: big_a,
                big_n_other: Some(big_n_total - big_a),
                ..*template
            })
        })
        .collect()
}

/// Run cells that carry a planning target, recording it on each row.
pub fn run_targeted(cells: &[(Cell, f64)], opts: &RunOptions) -> Result<Vec<SimRow>> {
    cells
        .iter()
        .enumerate()
        .map(|(i, (c, target))| {
            let mut row = run_cell(c, i as u64, opts)?;
            row.target_power = Some(*target);
            Ok(row)
        })
        .collect()
}

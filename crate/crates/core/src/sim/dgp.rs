//! Data-generating processes for each simulated design.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::normal_quantile;
use crate::sim::bivariate::latent_correlation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimDesign {
    OneSampleCont,
    OneSampleBin,
    TwoSampleCont,
    TwoSampleBin,
    PairedCont,
    PairedBin,
    TwoByTwoRr,
    TwoByTwoOr,
    OlsContrast,
    LogisticContrast,
}

impl SimDesign {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            SimDesign::OneSampleBin
                | SimDesign::TwoSampleBin
                | SimDesign::PairedBin
                | SimDesign::TwoByTwoRr
                | SimDesign::TwoByTwoOr
                | SimDesign::LogisticContrast
        )
    }

    pub fn is_two_group(self) -> bool {
        matches!(
            self,
            SimDesign::TwoSampleCont | SimDesign::TwoSampleBin | SimDesign::TwoByTwoRr | SimDesign::TwoByTwoOr
        )
    }

    pub fn is_regression(self) -> bool {
        matches!(self, SimDesign::OlsContrast | SimDesign::LogisticContrast)
    }

    pub fn name(self) -> &'static str {
        match self {
            SimDesign::OneSampleCont => "one_sample_cont",
            SimDesign::OneSampleBin => "one_sample_bin",
            SimDesign::TwoSampleCont => "two_sample_cont",
            SimDesign::TwoSampleBin => "two_sample_bin",
            SimDesign::PairedCont => "paired_cont",
            SimDesign::PairedBin => "paired_bin",
            SimDesign::TwoByTwoRr => "two_by_two_rr",
            SimDesign::TwoByTwoOr => "two_by_two_or",
            SimDesign::OlsContrast => "ols_contrast",
            SimDesign::LogisticContrast => "logistic_contrast",
        }
    }
}

/// Outcome noise law. Continuous laws are standardized to mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeDist {
    Gaussian,
    T5,
    Lognormal,
    Bernoulli,
}

impl OutcomeDist {
    /// One standardized noise draw.
    pub fn noise<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            OutcomeDist::Gaussian | OutcomeDist::Bernoulli => StandardNormal.sample(rng),
            OutcomeDist::T5 => {
                let t: f64 = StudentT::new(5.0).expect("dof > 0").sample(rng);
                t / (5.0f64 / 3.0).sqrt()
            }
            OutcomeDist::Lognormal => {
                let z: f64 = StandardNormal.sample(rng);
                let e = std::f64::consts::E;
                (z.exp() - 0.5f64.exp()) / ((e - 1.0) * e).sqrt()
            }
        }
    }
}

/// One simulation cell: a design and every parameter a replicate needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub design: SimDesign,
    /// Labeled count (group A / control group for two-group designs).
    pub n: u64,
    /// Unlabeled count (per group for two-group designs).
    pub big_n: u64,
    /// Unlabeled count of the second group when it differs from `big_n`.
    pub big_n_other: Option<u64>,
    /// ρ for continuous designs; sensitivity = specificity for binary ones.
    pub quality: f64,
    pub delta: f64,
    /// n_B/n_A for two-group designs.
    pub kappa: f64,
    pub dist: OutcomeDist,
    /// Baseline success probability (null value for one-sample binary,
    /// group B for two-sample binary, control for 2×2).
    pub p_base: f64,
    /// Within-pair correlation of the binary paired outcomes.
    pub within_pair_corr: f64,
    pub alpha: f64,
}

impl Cell {
    pub fn new(design: SimDesign, n: u64, big_n: u64, quality: f64, delta: f64) -> Self {
        Cell {
            design,
            n,
            big_n,
            big_n_other: None,
            quality,
            delta,
            kappa: 1.0,
            dist: if design.is_binary() { OutcomeDist::Bernoulli } else { OutcomeDist::Gaussian },
            p_base: default_p_base(design),
            within_pair_corr: 0.3,
            alpha: 0.05,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn n_other(&self) -> u64 {
        let scaled = self.kappa * self.n as f64;
        let rounded = scaled.round();
        if (scaled - rounded).abs() <= 1e-9 * scaled.max(1.0) { rounded as u64 } else { scaled.ceil() as u64 }
    }

    pub fn big_n_second(&self) -> u64 {
        self.big_n_other.unwrap_or(self.big_n)
    }

    /// Success probabilities (first, second) for binary designs.
    pub fn probabilities(&self) -> (f64, f64) {
        match self.design {
            // Control is the first group; the second carries the effect.
            SimDesign::TwoByTwoRr | SimDesign::TwoByTwoOr => (self.p_base, self.p_base + self.delta),
            _ => (self.p_base + self.delta, self.p_base),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.design;
        if self.n < 2 {
            return Err(Error::Config(format!("{}: n must be at least 2", d.name())));
        }
        if self.big_n < 2 || self.big_n_other.is_some_and(|b| b < 2) {
            return Err(Error::Config(format!("{}: N must be at least 2", d.name())));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0,1)".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) || self.n_other() < 2 && d.is_two_group() {
            return Err(Error::Config("kappa must give at least 2 labels in the second group".into()));
        }
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        if d.is_binary() != (self.dist == OutcomeDist::Bernoulli) {
            return Err(Error::Config(format!("{} is incompatible with outcome_dist {:?}", d.name(), self.dist)));
        }
        if d.is_binary() {
            if !(0.5..=1.0).contains(&self.quality) {
                return Err(Error::Config(format!("accuracy {} must lie in [0.5,1]", self.quality)));
            }
        } else if !(-1.0..=1.0).contains(&self.quality) {
            return Err(Error::Config(format!("rho {} must lie in [-1,1]", self.quality)));
        }
        if d.is_binary() && d != SimDesign::LogisticContrast {
            let (p1, p2) = self.probabilities();
            for p in [p1, p2] {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!("success probability {p} must lie in (0,1)")));
                }
            }
        }
        Ok(())
    }
}

fn default_p_base(design: SimDesign) -> f64 {
    match design {
        SimDesign::TwoByTwoRr | SimDesign::TwoByTwoOr => 0.2,
        _ => 0.3,
    }
}

/// Labeled (outcome, prediction) pairs plus unlabeled predictions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanData {
    pub labeled: Vec<(f64, f64)>,
    pub unlabeled: Vec<f64>,
}

impl MeanData {
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn big_n(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn r(&self) -> f64 {
        self.n() as f64 / self.big_n() as f64
    }
}

/// Covariates, outcomes and predictions for a regression contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x_labeled: DMatrix<f64>,
    pub y: DVector<f64>,
    pub f_labeled: DVector<f64>,
    pub x_unlabeled: DMatrix<f64>,
    pub f_unlabeled: DVector<f64>,
}

impl RegressionData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn big_n(&self) -> usize {
        self.f_unlabeled.len()
    }

    pub fn r(&self) -> f64 {
        self.n() as f64 / self.big_n() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// One-sample data, or within-pair differences (D, G) for paired designs.
    Mean(MeanData),
    /// Two independent groups (A then B, or control then exposed).
    TwoGroup(MeanData, MeanData),
    Regression(RegressionData),
}

/// Binary prediction with sensitivity = specificity = `accuracy`.
fn classify<R: Rng + ?Sized>(y: bool, accuracy: f64, rng: &mut R) -> bool {
    let correct = rng.random::<f64>() < accuracy;
    if correct { y } else { !y }
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

fn indicator(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

/// Continuous pair with mean μ: Y = μ + e, f = μ + ρe + √(1 − ρ²)η.
fn continuous_pair<R: Rng + ?Sized>(mu: f64, rho: f64, dist: OutcomeDist, rng: &mut R) -> (f64, f64) {
    let e = dist.noise(rng);
    let eta: f64 = StandardNormal.sample(rng);
    (mu + e, mu + rho * e + (1.0 - rho * rho).sqrt() * eta)
}

fn mean_block<R: Rng + ?Sized>(n: u64, big_n: u64, mut draw: impl FnMut(&mut R) -> (f64, f64), rng: &mut R) -> MeanData {
    let labeled = (0..n).map(|_| draw(rng)).collect();
    let unlabeled = (0..big_n).map(|_| draw(rng).1).collect();
    MeanData { labeled, unlabeled }
}

/// Draw one replicate dataset for a cell.
pub fn generate<R: Rng + ?Sized>(cell: &Cell, rng: &mut R) -> Result<Dataset> {
    cell.validate()?;
    let acc = cell.quality;
    let (p1, p2) = cell.probabilities();
    let data = match cell.design {
        SimDesign::OneSampleCont => {
            Dataset::Mean(mean_block(cell.n, cell.big_n, |r| continuous_pair(cell.delta, cell.quality, cell.dist, r), rng))
        }
        SimDesign::OneSampleBin => Dataset::Mean(mean_block(cell.n, cell.big_n, |r| binary_pair(p1, acc, r), rng)),
        SimDesign::TwoSampleCont => {
            let a = mean_block(cell.n, cell.big_n, |r| continuous_pair(cell.delta, cell.quality, cell.dist, r), rng);
            let b = mean_block(cell.n_other(), cell.big_n_second(), |r| continuous_pair(0.0, cell.quality, cell.dist, r), rng);
            Dataset::TwoGroup(a, b)
        }
        SimDesign::TwoSampleBin | SimDesign::TwoByTwoRr | SimDesign::TwoByTwoOr => {
            let a = mean_block(cell.n, cell.big_n, |r| binary_pair(p1, acc, r), rng);
            let b = mean_block(cell.n_other(), cell.big_n_second(), |r| binary_pair(p2, acc, r), rng);
            Dataset::TwoGroup(a, b)
        }
        SimDesign::PairedCont => Dataset::Mean(mean_block(cell.n, cell.big_n, |r| paired_continuous(cell, r), rng)),
        SimDesign::PairedBin => {
            let latent = latent_correlation(p1, p2, cell.within_pair_corr)?;
            let thresholds = (normal_quantile(p1)?, normal_quantile(p2)?);
            Dataset::Mean(mean_block(cell.n, cell.big_n, |r| paired_binary(thresholds, latent, acc, r), rng))
        }
        SimDesign::OlsContrast => Dataset::Regression(regression_block(cell, rng, |x, rng| {
            let e: f64 = cell.dist.noise(rng);
            let eta: f64 = StandardNormal.sample(rng);
            let mean = cell.delta * x[0];
            let rho = cell.quality;
            (mean + e, mean + rho * e + (1.0 - rho * rho).sqrt() * eta)
        })),
        SimDesign::LogisticContrast => Dataset::Regression(regression_block(cell, rng, |x, rng| {
            let p = expit(cell.delta * x[0]);
            let y = bernoulli(p, rng);
            (indicator(y), indicator(classify(y, acc, rng)))
        })),
    };
    Ok(data)
}

fn binary_pair<R: Rng + ?Sized>(p: f64, accuracy: f64, rng: &mut R) -> (f64, f64) {
    let y = bernoulli(p, rng);
    (indicator(y), indicator(classify(y, accuracy, rng)))
}

/// Differences (D, G) from two measurements sharing a subject effect.
///
/// Y_j = s + Δ·1{j = 1} + u_j and f_j = s + Δ·1{j = 1} + ρu_j + √(1 − ρ²)v_j
/// with u_j, v_j of variance 1/2, so Var D = Var G = 1 and Corr(D, G) = ρ.
fn paired_continuous<R: Rng + ?Sized>(cell: &Cell, rng: &mut R) -> (f64, f64) {
    let rho = cell.quality;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let subject: f64 = StandardNormal.sample(rng);
    let mut y = [0.0; 2];
    let mut f = [0.0; 2];
    for j in 0..2 {
        let shift = if j == 0 { cell.delta } else { 0.0 };
        let u = half * cell.dist.noise(rng);
        let v: f64 = StandardNormal.sample(rng);
        let v = half * v;
        y[j] = subject + shift + u;
        f[j] = subject + shift + rho * u + (1.0 - rho * rho).sqrt() * v;
    }
    (y[0] - y[1], f[0] - f[1])
}

/// Binary measurements from a latent bivariate normal threshold model.
fn paired_binary<R: Rng + ?Sized>(thresholds: (f64, f64), latent: f64, accuracy: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let e: f64 = StandardNormal.sample(rng);
    let z2 = latent * z1 + (1.0 - latent * latent).sqrt() * e;
    let y1 = z1 < thresholds.0;
    let y2 = z2 < thresholds.1;
    let f1 = classify(y1, accuracy, rng);
    let f2 = classify(y2, accuracy, rng);
    (indicator(y1) - indicator(y2), indicator(f1) - indicator(f2))
}

pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// X ~ N(0, I₂) rows with (outcome, prediction) drawn given x.
fn regression_block<R: Rng + ?Sized>(
    cell: &Cell,
    rng: &mut R,
    mut draw: impl FnMut([f64; 2], &mut R) -> (f64, f64),
) -> RegressionData {
    let mut block = |count: usize, rng: &mut R| {
        let mut x = DMatrix::zeros(count, 2);
        let mut y = DVector::zeros(count);
        let mut f = DVector::zeros(count);
        for i in 0..count {
            let row = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
            let (yi, fi) = draw(row, rng);
            x[(i, 0)] = row[0];
            x[(i, 1)] = row[1];
            y[i] = yi;
            f[i] = fi;
        }
        (x, y, f)
    };
    let (x_labeled, y, f_labeled) = block(cell.n as usize, rng);
    let (x_unlabeled, _, f_unlabeled) = block(cell.big_n as usize, rng);
    RegressionData { x_labeled, y, f_labeled, x_unlabeled, f_unlabeled }
}

//! Declarative experiment files.
//!
//! An experiment is a TOML document with run-level keys at the top and one
//! table describing the suite selected by `kind`:
//!
//! ```toml
//! design = "one_sample_cont"
//! replicates = 1000
//! seed = 20260101
//! lambda_mode = "oracle"
//! kind = "grid"
//!
//! [grid]
//! n = [20, 40, 60, 80, 100]
//! N = [200, 500]
//! quality = [0.5, 0.7, 0.9]
//! delta = [0.2]
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sim::dgp::{Cell, OutcomeDist, SimDesign};
use crate::sim::experiment::{
    allocation_cells, grid_cells, inversion_cells, misspecified_cells, run_cells, run_targeted, LambdaMode,
    RunOptions,
};
use crate::sim::report::SimResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Grid,
    Inversion,
    Misspecified,
    Allocation,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: Vec<u64>,
    #[serde(rename = "N")]
    pub big_n: Vec<u64>,
    /// ρ for continuous designs, accuracy for binary ones.
    pub quality: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSpec {
    #[serde(rename = "N")]
    pub big_n: u64,
    pub targets: Vec<f64>,
    pub quality: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecifiedSpec {
    #[serde(rename = "N")]
    pub big_n: u64,
    #[serde(default = "default_target")]
    pub target: f64,
    pub rho_plan: f64,
    /// Offsets added to `rho_plan` to get the simulated correlation.
    pub rho_shift: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    pub n_total: u64,
    #[serde(rename = "N_total")]
    pub big_n_total: u64,
    /// Group A labeled counts; group B gets the remainder.
    pub n_a: Vec<u64>,
    pub quality: f64,
    pub delta: f64,
}

fn default_replicates() -> u64 {
    1000
}
fn default_folds() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.05
}
fn default_target() -> f64 {
    0.8
}
fn default_within() -> f64 {
    0.3
}
fn default_kappa() -> f64 {
    1.0
}
fn default_reference() -> usize {
    100_000
}
fn default_mode() -> LambdaMode {
    LambdaMode::Oracle
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub design: SimDesign,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub lambda_mode: LambdaMode,
    /// Fold count for `lambda_mode = "crossfit"`.
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Defaults to bernoulli for binary designs and gaussian otherwise.
    pub outcome_dist: Option<OutcomeDist>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub include_null: bool,
    pub p_base: Option<f64>,
    #[serde(default = "default_within")]
    pub within_pair_corr: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_reference")]
    pub reference_size: usize,
    pub kind: SuiteKind,
    pub grid: Option<GridSpec>,
    pub inversion: Option<InversionSpec>,
    pub misspecified: Option<MisspecifiedSpec>,
    pub allocation: Option<AllocationSpec>,
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("grid axis `{name}` is empty")));
    }
    Ok(())
}

fn missing(kind: &str) -> Error {
    Error::Config(format!("kind = \"{kind}\" needs a [{kind}] table"))
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            replicates: self.replicates,
            seed: self.seed,
            lambda_mode: self.lambda_mode,
            folds: self.folds,
            include_null: self.include_null,
            reference_size: self.reference_size,
        }
    }

    /// Cell carrying every run-level setting, with placeholder n, N, quality and Δ.
    pub fn template(&self) -> Cell {
        let mut cell = Cell::new(self.design, 2, 2, 0.5, 0.0);
        if let Some(dist) = self.outcome_dist {
            cell.dist = dist;
        }
        if let Some(p) = self.p_base {
            cell.p_base = p;
        }
        cell.alpha = self.alpha;
        cell.within_pair_corr = self.within_pair_corr;
        cell.kappa = self.kappa;
        cell
    }

    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        match self.kind {
            SuiteKind::Grid => {
                let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
                nonempty("n", &g.n)?;
                nonempty("N", &g.big_n)?;
                nonempty("quality", &g.quality)?;
                nonempty("delta", &g.delta)?;
            }
            SuiteKind::Inversion => {
                let s = self.inversion.as_ref().ok_or_else(|| missing("inversion"))?;
                nonempty("targets", &s.targets)?;
                nonempty("quality", &s.quality)?;
            }
            SuiteKind::Misspecified => {
                let s = self.misspecified.as_ref().ok_or_else(|| missing("misspecified"))?;
                nonempty("rho_shift", &s.rho_shift)?;
            }
            SuiteKind::Allocation => {
                let s = self.allocation.as_ref().ok_or_else(|| missing("allocation"))?;
                nonempty("n_a", &s.n_a)?;
                if !self.design.is_two_group() {
                    return Err(Error::Config("allocation suites need a two-group design".into()));
                }
            }
        }
        Ok(())
    }
}

/// Expand the configured suite into cells and simulate them in order.
pub fn run_experiment(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let opts = cfg.options();
    let template = cfg.template();
    let rows = match cfg.kind {
        SuiteKind::Grid => {
            let g = cfg.grid.as_ref().ok_or_else(|| missing("grid"))?;
            run_cells(&grid_cells(&template, &g.n, &g.big_n, &g.quality, &g.delta), &opts)?
        }
        SuiteKind::Inversion => {
            let s = cfg.inversion.as_ref().ok_or_else(|| missing("inversion"))?;
            let base = Cell { big_n: s.big_n, delta: s.delta, ..template };
            run_targeted(&inversion_cells(&base, &s.targets, &s.quality, cfg.lambda_mode, &opts)?, &opts)?
        }
        SuiteKind::Misspecified => {
            let s = cfg.misspecified.as_ref().ok_or_else(|| missing("misspecified"))?;
            let base = Cell { big_n: s.big_n, delta: s.delta, ..template };
            let truths: Vec<f64> = s.rho_shift.iter().map(|d| s.rho_plan + d).collect();
            let cells = misspecified_cells(&base, s.target, s.rho_plan, &truths, &opts)?;
            let targeted: Vec<(Cell, f64)> = cells.into_iter().map(|c| (c, s.target)).collect();
            run_targeted(&targeted, &opts)?
        }
        SuiteKind::Allocation => {
            let s = cfg.allocation.as_ref().ok_or_else(|| missing("allocation"))?;
            let base = Cell { quality: s.quality, delta: s.delta, ..template };
            run_cells(&allocation_cells(&base, s.n_total, s.big_n_total, &s.n_a)?, &opts)?
        }
    };
    Ok(SimResult { rows })
}

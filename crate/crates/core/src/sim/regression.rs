//! Rectified estimating equations for linear and logistic regression
//! contrasts, with plug-in sandwich standard errors.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::calibration::{lambda_from_moments, sample_moments};
use crate::error::{Error, Result};
use crate::sim::dgp::{expit, generate, Cell, Dataset, RegressionData, SimDesign};
use crate::variance::ContrastBlocks;

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 50;
/// Linear predictors this large mean fitted probabilities within 1e−13 of
/// 0 or 1, the signature of a separated sample drifting to infinity.
const SEPARATION_ETA: f64 = 30.0;
/// Minimum eigenvalue of the pooled Gram matrix relative to its largest.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Logistic,
}

impl Family {
    fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Logistic => expit(eta),
        }
    }

    fn weight(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Logistic => {
                let mu = expit(eta);
                mu * (1.0 - mu)
            }
        }
    }

    pub fn for_design(design: SimDesign) -> Option<Family> {
        match design {
            SimDesign::OlsContrast => Some(Family::Gaussian),
            SimDesign::LogisticContrast => Some(Family::Logistic),
            _ => None,
        }
    }
}

/// (1/m)Σ x_i(μ(x_iᵀθ) − t_i).
fn mean_score(x: &DMatrix<f64>, target: &DVector<f64>, family: Family, theta: &DVector<f64>) -> DVector<f64> {
    let eta = x * theta;
    let resid = DVector::from_fn(x.nrows(), |i, _| family.mean(eta[i]) - target[i]);
    x.tr_mul(&resid) / x.nrows() as f64
}

/// (1/m)Σ w(x_iᵀθ) x_i x_iᵀ.
fn mean_gram(x: &DMatrix<f64>, family: Family, theta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * theta;
    let mut weighted = x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= family.weight(eta[i]);
    }
    x.tr_mul(&weighted) / x.nrows() as f64
}

/// Rectified score: labeled Y-score + λ(unlabeled f-score − labeled f-score).
pub fn rectified_score(data: &RegressionData, family: Family, lambda: f64, theta: &DVector<f64>) -> DVector<f64> {
    let s_y = mean_score(&data.x_labeled, &data.y, family, theta);
    let s_fu = mean_score(&data.x_unlabeled, &data.f_unlabeled, family, theta);
    let s_fl = mean_score(&data.x_labeled, &data.f_labeled, family, theta);
    s_y + (s_fu - s_fl) * lambda
}

/// Jacobian of the rectified score: (1 − λ)·Gram_L + λ·Gram_U.
fn rectified_jacobian(data: &RegressionData, family: Family, lambda: f64, theta: &DVector<f64>) -> DMatrix<f64> {
    mean_gram(&data.x_labeled, family, theta) * (1.0 - lambda) + mean_gram(&data.x_unlabeled, family, theta) * lambda
}

fn pooled_hessian(data: &RegressionData, family: Family, theta: &DVector<f64>) -> DMatrix<f64> {
    let (n, big_n) = (data.n() as f64, data.big_n() as f64);
    (mean_gram(&data.x_labeled, family, theta) * n + mean_gram(&data.x_unlabeled, family, theta) * big_n) / (n + big_n)
}

fn check_rank(data: &RegressionData) -> Result<()> {
    let p = data.x_labeled.ncols();
    if data.x_unlabeled.ncols() != p {
        return Err(Error::Singular("labeled and unlabeled blocks differ in width".into()));
    }
    let gram = pooled_hessian(data, Family::Gaussian, &DVector::zeros(p));
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= RANK_TOL * hi {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    }
    Ok(())
}

fn solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.lu().solve(rhs).ok_or_else(|| Error::Singular("rectified system has no unique solution".into()))
}

/// Solves [(1 − λ)X_LᵀX_L/n + λX_UᵀX_U/N]β = X_Lᵀ(y − λf_L)/n + λX_Uᵀf_U/N.
pub fn rectified_ols_solve(data: &RegressionData, lambda: f64) -> Result<DVector<f64>> {
    check_rank(data)?;
    let p = data.x_labeled.ncols();
    let zero = DVector::zeros(p);
    let jac = rectified_jacobian(data, Family::Gaussian, lambda, &zero);
    // The score is affine in β, so one Newton step from 0 is exact.
    let step = solve(jac, &rectified_score(data, Family::Gaussian, lambda, &zero))?;
    Ok(-step)
}

/// Root of the rectified logistic score and the iterations it took.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub theta: DVector<f64>,
    pub iterations: usize,
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on the rectified logistic score, starting at 0.
///
/// Steps are halved until the max-norm of the score decreases. Converges when
/// that norm falls below 1e−8; fails after 50 iterations, or when the root
/// drives a labeled linear predictor past ±30 (separation).
pub fn rectified_logistic_solve(data: &RegressionData, lambda: f64) -> Result<LogisticFit> {
    let fit = newton(data, lambda)?;
    if (&data.x_labeled * &fit.theta).amax() > SEPARATION_ETA {
        return Err(Error::NotConverged { iterations: fit.iterations });
    }
    Ok(fit)
}

fn newton(data: &RegressionData, lambda: f64) -> Result<LogisticFit> {
    check_rank(data)?;
    let family = Family::Logistic;
    let mut theta = DVector::zeros(data.x_labeled.ncols());
    let mut score = rectified_score(data, family, lambda, &theta);
    let mut norm = max_abs(&score);
    for iter in 0..MAX_ITER {
        if norm < SCORE_TOL {
            return Ok(LogisticFit { theta, iterations: iter });
        }
        let step = solve(rectified_jacobian(data, family, lambda, &theta), &score)?;
        let mut t = 1.0;
        loop {
            let candidate = &theta - &step * t;
            let cand_score = rectified_score(data, family, lambda, &candidate);
            let cand_norm = max_abs(&cand_score);
            if cand_norm < norm || t < 1e-6 {
                theta = candidate;
                score = cand_score;
                norm = cand_norm;
                break;
            }
            t *= 0.5;
        }
        if !theta.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    if norm < SCORE_TOL {
        Ok(LogisticFit { theta, iterations: MAX_ITER })
    } else {
        Err(Error::NotConverged { iterations: MAX_ITER })
    }
}

pub fn rectified_solve(data: &RegressionData, family: Family, lambda: f64) -> Result<DVector<f64>> {
    match family {
        Family::Gaussian => rectified_ols_solve(data, lambda),
        Family::Logistic => rectified_logistic_solve(data, lambda).map(|fit| fit.theta),
    }
}

/// Contrast-level score residuals aᵀĤ⁻¹x(μ − t) at a given θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastScores {
    pub y_labeled: Vec<f64>,
    pub f_labeled: Vec<f64>,
    pub f_unlabeled: Vec<f64>,
}

pub fn contrast_scores(
    data: &RegressionData,
    family: Family,
    theta: &DVector<f64>,
    contrast: &DVector<f64>,
) -> Result<ContrastScores> {
    let h = pooled_hessian(data, family, theta);
    let g = solve(h, contrast)?;
    let scores = |x: &DMatrix<f64>, t: &DVector<f64>| -> Vec<f64> {
        let lever = x * &g;
        let eta = x * theta;
        (0..x.nrows()).map(|i| lever[i] * (family.mean(eta[i]) - t[i])).collect()
    };
    Ok(ContrastScores {
        y_labeled: scores(&data.x_labeled, &data.y),
        f_labeled: scores(&data.x_labeled, &data.f_labeled),
        f_unlabeled: scores(&data.x_unlabeled, &data.f_unlabeled),
    })
}

/// (V̂_YY, V̂_ff, V̂_Yf): labeled variance and covariance for the Y terms,
/// labeled and unlabeled f-scores pooled for V̂_ff.
pub fn blocks_from_scores(s: &ContrastScores) -> ContrastBlocks {
    let labeled: Vec<(f64, f64)> = s.y_labeled.iter().copied().zip(s.f_labeled.iter().copied()).collect();
    let (v_yy, _, v_yf) = sample_moments(&labeled);
    let pooled: Vec<(f64, f64)> = s.f_labeled.iter().chain(&s.f_unlabeled).map(|&v| (v, v)).collect();
    let (v_ff, _, _) = sample_moments(&pooled);
    ContrastBlocks { v_yy, v_ff, v_yf }
}

/// Sandwich standard error of aᵀθ̂_λ from (V̂_YY + λ²(1 + r)V̂_ff − 2λV̂_Yf)/n,
/// grouped as Var̂(ψ_Y − λψ_f)/n over labeled rows plus λ²V̂_ff/N.
pub fn sandwich_se(
    data: &RegressionData,
    family: Family,
    theta: &DVector<f64>,
    contrast: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    let s = contrast_scores(data, family, theta, contrast)?;
    let b = blocks_from_scores(&s);
    let residual: Vec<(f64, f64)> =
        s.y_labeled.iter().zip(&s.f_labeled).map(|(y, f)| (y - lambda * f, 0.0)).collect();
    let (v_res, _, _) = sample_moments(&residual);
    let var = v_res / data.n() as f64 + lambda * lambda * b.v_ff / data.big_n() as f64;
    Ok(var.max(0.0).sqrt())
}

/// Plug-in λ̂ from blocks evaluated at the vanilla (λ = 1) fit.
pub fn regression_plugin_lambda(data: &RegressionData, family: Family, contrast: &DVector<f64>) -> Result<f64> {
    let pilot = rectified_solve(data, family, 1.0)?;
    let b = blocks_from_scores(&contrast_scores(data, family, &pilot, contrast)?);
    Ok(lambda_from_moments(b.v_yf, b.v_ff, data.r()).lambda)
}

fn subset_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows.iter())
}

/// K-fold cross-fitted λ̂.
///
/// For each fold, θ is fitted by vanilla PPI on the remaining labeled rows and
/// the full unlabeled block; the fold's labeled rows are then scored at that
/// fit. Unlabeled f-scores are averaged over the K fits. The plug-in formula
/// is applied to the assembled out-of-fold scores. λ̂ is not clipped; when a
/// λ̂ above 1 leaves the final solve without a root, the replicate is dropped
/// like any other non-converged fit.
pub fn regression_crossfit_lambda<R: Rng + ?Sized>(
    data: &RegressionData,
    family: Family,
    contrast: &DVector<f64>,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = data.n();
    if k < 2 || n < 2 * k {
        return Err(Error::Config(format!("cannot cross-fit {n} labeled rows with {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut y_scores = vec![0.0; n];
    let mut f_scores = vec![0.0; n];
    let mut u_scores = vec![0.0; data.big_n()];
    for j in 0..k {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|&pos| pos % k == j);
        let held: Vec<usize> = held.iter().map(|&pos| order[pos]).collect();
        let kept: Vec<usize> = kept.iter().map(|&pos| order[pos]).collect();
        let train = RegressionData {
            x_labeled: subset_rows(&data.x_labeled, &kept),
            y: DVector::from_iterator(kept.len(), kept.iter().map(|&i| data.y[i])),
            f_labeled: DVector::from_iterator(kept.len(), kept.iter().map(|&i| data.f_labeled[i])),
            x_unlabeled: data.x_unlabeled.clone(),
            f_unlabeled: data.f_unlabeled.clone(),
        };
        let theta = rectified_solve(&train, family, 1.0)?;
        let s = contrast_scores(data, family, &theta, contrast)?;
        for &i in &held {
            y_scores[i] = s.y_labeled[i];
            f_scores[i] = s.f_labeled[i];
        }
        for (acc, v) in u_scores.iter_mut().zip(&s.f_unlabeled) {
            *acc += v / k as f64;
        }
    }
    let b = blocks_from_scores(&ContrastScores { y_labeled: y_scores, f_labeled: f_scores, f_unlabeled: u_scores });
    Ok(lambda_from_moments(b.v_yf, b.v_ff, data.r()).lambda)
}

/// The contrast a = (1, −1) used by the simulated regression designs.
pub fn default_contrast() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -1.0])
}

/// Population contrast blocks at the true coefficients β = (Δ, 0), estimated
/// from one reference sample of size M drawn from the cell's generator.
pub fn glm_reference_blocks<R: Rng + ?Sized>(cell: &Cell, m: usize, rng: &mut R) -> Result<ContrastBlocks> {
    let family = Family::for_design(cell.design)
        .ok_or_else(|| Error::Config(format!("{} is not a regression design", cell.design.name())))?;
    if m < 10_000 {
        return Err(Error::Config(format!("reference sample size {m} is below 10000")));
    }
    let reference = Cell { n: m as u64, big_n: 2, ..*cell };
    let Dataset::Regression(data) = generate(&reference, rng)? else { unreachable!("regression design") };
    let truth = DVector::from_vec(vec![cell.delta, 0.0]);
    let contrast = default_contrast();
    let x = &data.x_labeled;
    let h = mean_gram(x, family, &truth);
    let g = solve(h, &contrast)?;
    let lever = x * &g;
    let eta = x * &truth;
    let pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let mu = family.mean(eta[i]);
            (lever[i] * (mu - data.y[i]), lever[i] * (mu - data.f_labeled[i]))
        })
        .collect();
    let (v_yy, v_ff, v_yf) = sample_moments(&pairs);
    Ok(ContrastBlocks { v_yy, v_ff, v_yf })
}

//! Rectified mean estimators, plug-in variances and Wald decisions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::calibration::{lambda_from_moments, sample_moments};
use crate::design::DesignInputs;
use crate::error::{Error, Result, Warning};
use crate::normal::{normal_quantile, phi};
use crate::sim::dgp::MeanData;

/// Point estimate with its plug-in variance and the weight that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub lambda: f64,
}

/// Two-sided Wald decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub estimate: f64,
    pub se: f64,
    pub lambda: f64,
    pub reject: bool,
    pub p_value: f64,
    pub warning: Option<Warning>,
}

/// How the tuning weight is chosen for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Labeled-sample moments: λ̂ = Ĉov(Y, f)/((1 + r)σ̂²_f).
    Plugin,
    CrossFit { folds: usize, model: FoldModel },
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let len = xs.len() as f64;
    xs.sum::<f64>() / len
}

/// Unbiased variance of the labeled predictions and the unlabeled pool combined.
fn pooled_variance(labeled: impl Iterator<Item = f64>, unlabeled: &[f64]) -> f64 {
    let values: Vec<(f64, f64)> = labeled.chain(unlabeled.iter().copied()).map(|v| (v, v)).collect();
    sample_moments(&values).0
}

/// The plug-in variance σ̂²_Y/n + λ²σ̂²_f(1/N + 1/n) − 2λĈov/n, grouped as
/// Var̂(Y − λf)/n + λ²σ̂²_f/N.
///
/// The 1/n term uses the labeled pairs only, so it is a sample variance and
/// keeps its internal cancellation when Y and f are highly correlated. The
/// 1/N term pools the predictions from both blocks.
fn plugin_variance(labeled: &[(f64, f64)], pooled_var_f: f64, lambda: f64, big_n: f64) -> f64 {
    let (var_y, var_f_l, cov) = sample_moments(labeled);
    let residual = (var_y + lambda * lambda * var_f_l - 2.0 * lambda * cov).max(0.0);
    residual / labeled.len() as f64 + lambda * lambda * pooled_var_f / big_n
}

/// θ̂_λ = Ȳ_L + λ(f̄_U − f̄_L) with its plug-in variance.
pub fn ppi_pp_mean(data: &MeanData, lambda: f64) -> MeanEstimate {
    let y_bar = mean(data.labeled.iter().map(|p| p.0));
    let f_l = mean(data.labeled.iter().map(|p| p.1));
    let f_u = mean(data.unlabeled.iter().copied());
    let var_f = pooled_variance(data.labeled.iter().map(|p| p.1), &data.unlabeled);
    MeanEstimate {
        estimate: y_bar + lambda * (f_u - f_l),
        variance: plugin_variance(&data.labeled, var_f, lambda, data.big_n() as f64),
        lambda,
    }
}

/// λ̂ from labeled sample moments.
pub fn plugin_lambda_for(data: &MeanData) -> (f64, Option<Warning>) {
    let (_, var_f, cov) = sample_moments(&data.labeled);
    let t = lambda_from_moments(cov, var_f, data.r());
    (t.lambda, t.warning)
}

/// Estimate a mean under the chosen tuning rule.
pub fn estimate_mean<R: Rng + ?Sized>(data: &MeanData, choice: LambdaChoice, rng: &mut R) -> Result<MeanEstimate> {
    if data.n() < 2 || data.big_n() < 1 {
        return Err(Error::Config("need at least 2 labeled and 1 unlabeled observation".into()));
    }
    match choice {
        LambdaChoice::Fixed(lambda) => Ok(ppi_pp_mean(data, lambda)),
        LambdaChoice::Plugin => Ok(ppi_pp_mean(data, plugin_lambda_for(data).0)),
        LambdaChoice::CrossFit { folds, model } => {
            let cf = crossfit_lambda(&data.labeled, folds, data.r(), model, rng)?;
            Ok(crossfit_mean(data, &cf))
        }
    }
}

/// Wald decision for an estimate and variance against θ₀ at level α.
pub fn wald_test(estimate: f64, variance: f64, lambda: f64, d: &DesignInputs) -> WaldTest {
    if !(variance > 0.0 && variance.is_finite()) {
        return WaldTest {
            estimate,
            se: variance.max(0.0).sqrt(),
            lambda,
            reject: false,
            p_value: 1.0,
            warning: Some(Warning::DegenerateTest),
        };
    }
    let se = variance.sqrt();
    let z = (estimate - d.theta0) / se;
    let crit = normal_quantile(1.0 - d.alpha / 2.0).expect("alpha validated");
    WaldTest { estimate, se, lambda, reject: z.abs() > crit, p_value: 2.0 * phi(-z.abs()), warning: None }
}

/// One-sample (or paired-difference) test of H₀: θ = θ₀.
pub fn ppi_pp_test<R: Rng + ?Sized>(
    data: &MeanData,
    choice: LambdaChoice,
    d: &DesignInputs,
    rng: &mut R,
) -> Result<WaldTest> {
    let e = estimate_mean(data, choice, rng)?;
    Ok(wald_test(e.estimate, e.variance, e.lambda, d))
}

/// How each fold's predictor is obtained from the out-of-fold labeled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldModel {
    /// The supplied predictions are used unchanged in every fold.
    Pretrained,
    /// Least-squares recalibration Y ≈ a + b·f fitted on the other folds.
    LinearRecalibration,
}

/// f ↦ a + b·f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 0.0, b: 1.0 };

    pub fn apply(&self, f: f64) -> f64 {
        self.a + self.b * f
    }
}

impl FoldModel {
    fn fit(self, train: &[(f64, f64)]) -> Affine {
        match self {
            FoldModel::Pretrained => Affine::IDENTITY,
            FoldModel::LinearRecalibration => {
                let (_, var_f, cov) = sample_moments(train);
                let y_bar = mean(train.iter().map(|p| p.0));
                let f_bar = mean(train.iter().map(|p| p.1));
                let b = if var_f > 0.0 { cov / var_f } else { 0.0 };
                Affine { a: y_bar - b * f_bar, b }
            }
        }
    }
}

/// Fold predictors and the cross-fitted tuning weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    pub lambda: f64,
    pub warning: Option<Warning>,
    /// Fold index of each labeled observation.
    pub fold_of: Vec<usize>,
    /// Predictor fitted without each fold.
    pub maps: Vec<Affine>,
    /// Out-of-fold prediction for each labeled observation.
    pub out_of_fold: Vec<f64>,
}

impl CrossFit {
    /// The average predictor f̄ = K⁻¹Σ f⁽ʲ⁾.
    pub fn average_map(&self) -> Affine {
        let k = self.maps.len() as f64;
        Affine {
            a: self.maps.iter().map(|m| m.a).sum::<f64>() / k,
            b: self.maps.iter().map(|m| m.b).sum::<f64>() / k,
        }
    }
}

/// K-fold cross-fitted tuning weight.
///
/// Folds are assigned round-robin over a random permutation of the labeled
/// indices. Each labeled point is scored by the predictor fitted without its
/// fold, and the plug-in formula is applied to the assembled out-of-fold pairs.
pub fn crossfit_lambda<R: Rng + ?Sized>(
    pairs: &[(f64, f64)],
    k: usize,
    r: f64,
    model: FoldModel,
    rng: &mut R,
) -> Result<CrossFit> {
    if k < 2 {
        return Err(Error::Config(format!("cross-fitting needs at least 2 folds, got {k}")));
    }
    if pairs.len() < 2 * k {
        return Err(Error::Config(format!("{} labeled points are too few for {k} folds", pairs.len())));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0; pairs.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let maps: Vec<Affine> = (0..k)
        .map(|j| {
            let train: Vec<(f64, f64)> =
                pairs.iter().zip(&fold_of).filter(|(_, &fold)| fold != j).map(|(p, _)| *p).collect();
            model.fit(&train)
        })
        .collect();
    let out_of_fold: Vec<f64> = pairs.iter().zip(&fold_of).map(|(p, &j)| maps[j].apply(p.1)).collect();
    let assembled: Vec<(f64, f64)> = pairs.iter().zip(&out_of_fold).map(|(p, &f)| (p.0, f)).collect();
    let (_, var_f, cov) = sample_moments(&assembled);
    let t = lambda_from_moments(cov, var_f, r);
    Ok(CrossFit { lambda: t.lambda, warning: t.warning, fold_of, maps, out_of_fold })
}

/// Cross-fitted estimator Ȳ_L + λ(K⁻¹Σ_j f̄⁽ʲ⁾_U − n⁻¹Σ_i f⁽ʲ⁽ⁱ⁾⁾(X_i)).
///
/// The variance uses the out-of-fold pairs in the 1/n term and the average
/// predictor on both blocks in the 1/N term.
pub fn crossfit_mean(data: &MeanData, cf: &CrossFit) -> MeanEstimate {
    let lambda = cf.lambda;
    let y_bar = mean(data.labeled.iter().map(|p| p.0));
    let f_u_raw = mean(data.unlabeled.iter().copied());
    let f_u = mean(cf.maps.iter().map(|m| m.apply(f_u_raw)));
    let f_l = mean(cf.out_of_fold.iter().copied());
    let assembled: Vec<(f64, f64)> = data.labeled.iter().zip(&cf.out_of_fold).map(|(p, &f)| (p.0, f)).collect();
    let avg = cf.average_map();
    let unlabeled: Vec<f64> = data.unlabeled.iter().map(|&f| avg.apply(f)).collect();
    let var_f = pooled_variance(cf.out_of_fold.iter().copied(), &unlabeled);
    MeanEstimate {
        estimate: y_bar + lambda * (f_u - f_l),
        variance: plugin_variance(&assembled, var_f, lambda, data.big_n() as f64),
        lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::{substream, Purpose};
    use approx::assert_abs_diff_eq;

    fn data() -> MeanData {
        MeanData {
            labeled: vec![(1.0, 0.8), (2.0, 2.5), (0.5, 0.1), (3.0, 2.6), (1.5, 1.9), (2.2, 2.0)],
            unlabeled: vec![1.0, 2.0, 1.4, 0.3, 2.2, 1.9, 1.1, 0.7],
        }
    }

    /// Two-pass moments, independent of the streaming implementation.
    fn two_pass(xs: &[f64], ys: &[f64]) -> f64 {
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn estimator_matches_hand_computation() {
        let d = data();
        let ys: Vec<f64> = d.labeled.iter().map(|p| p.0).collect();
        let fs: Vec<f64> = d.labeled.iter().map(|p| p.1).collect();
        let all_f: Vec<f64> = fs.iter().chain(&d.unlabeled).copied().collect();
        let (n, big_n, lambda) = (6.0, 8.0, 0.6);
        let est = ys.iter().sum::<f64>() / n
            + lambda * (d.unlabeled.iter().sum::<f64>() / big_n - fs.iter().sum::<f64>() / n);
        let resid: Vec<f64> = ys.iter().zip(&fs).map(|(y, f)| y - lambda * f).collect();
        let var = two_pass(&resid, &resid) / n + lambda * lambda * two_pass(&all_f, &all_f) / big_n;
        let e = ppi_pp_mean(&d, lambda);
        assert_abs_diff_eq!(e.estimate, est, epsilon = 1e-14);
        assert_abs_diff_eq!(e.variance, var, epsilon = 1e-14);
    }

    #[test]
    fn zero_weight_is_classical_z_test() {
        let d = data();
        let design = DesignInputs::new(0.05, 0.8, 0.0).unwrap().with_theta0(1.0);
        let mut rng = substream(0, 0, 0, Purpose::Alternative);
        let t = ppi_pp_test(&d, LambdaChoice::Fixed(0.0), &design, &mut rng).unwrap();
        let ys: Vec<f64> = d.labeled.iter().map(|p| p.0).collect();
        let y_bar = ys.iter().sum::<f64>() / 6.0;
        let se = (two_pass(&ys, &ys) / 6.0).sqrt();
        assert_abs_diff_eq!(t.estimate, y_bar, epsilon = 1e-14);
        assert_abs_diff_eq!(t.se, se, epsilon = 1e-14);
        assert_eq!(t.reject, ((y_bar - 1.0) / se).abs() > 1.959_963_984_540_054);
    }

    #[test]
    fn degenerate_variance_never_rejects() {
        let d = MeanData { labeled: vec![(1.0, 1.0); 4], unlabeled: vec![1.0; 4] };
        let design = DesignInputs::new(0.05, 0.8, 0.0).unwrap();
        let mut rng = substream(0, 0, 0, Purpose::Alternative);
        let t = ppi_pp_test(&d, LambdaChoice::Plugin, &design, &mut rng).unwrap();
        assert!(!t.reject);
        assert_eq!(t.warning, Some(Warning::DegenerateTest));
    }

    #[test]
    fn pretrained_crossfit_equals_plugin() {
        let d = data();
        let mut rng = substream(1, 2, 3, Purpose::Alternative);
        for k in [2, 3] {
            let cf = crossfit_lambda(&d.labeled, k, d.r(), FoldModel::Pretrained, &mut rng).unwrap();
            assert_abs_diff_eq!(cf.lambda, plugin_lambda_for(&d).0, epsilon = 1e-14);
            let a = crossfit_mean(&d, &cf);
            let b = ppi_pp_mean(&d, cf.lambda);
            assert_abs_diff_eq!(a.estimate, b.estimate, epsilon = 1e-14);
            assert_abs_diff_eq!(a.variance, b.variance, epsilon = 1e-14);
        }
    }

    #[test]
    fn folds_partition_labeled_sample() {
        let pairs: Vec<(f64, f64)> = (0..23).map(|i| (i as f64, (i * 7 % 5) as f64)).collect();
        let mut rng = substream(4, 0, 0, Purpose::Alternative);
        let cf = crossfit_lambda(&pairs, 4, 0.1, FoldModel::LinearRecalibration, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for &j in &cf.fold_of {
            counts[j] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert!(counts.iter().all(|&c| c == 5 || c == 6));
        assert!(crossfit_lambda(&pairs[..5], 3, 0.1, FoldModel::Pretrained, &mut rng).is_err());
        assert!(crossfit_lambda(&pairs, 1, 0.1, FoldModel::Pretrained, &mut rng).is_err());
    }

    #[test]
    fn recalibration_fits_out_of_fold_line() {
        // Exact line Y = 1 + 2f: every fold recovers it and λ̂ = 1/(1 + r).
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + 2.0 * i as f64, i as f64)).collect();
        let mut rng = substream(5, 0, 0, Purpose::Alternative);
        let cf = crossfit_lambda(&pairs, 2, 0.25, FoldModel::LinearRecalibration, &mut rng).unwrap();
        for m in &cf.maps {
            assert_abs_diff_eq!(m.a, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.b, 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(cf.lambda, 1.0 / 1.25, epsilon = 1e-12);
    }
}

//! Power and labeled-sample-size planning for prediction-powered inference.
//!
//! The crate covers the closed-form planning formulas for classical,
//! vanilla PPI and power-tuned PPI++ estimators, translation of classifier
//! or regressor quality metrics into the required second moments, and a
//! Monte Carlo harness for checking the formulas against simulation.

pub mod calibration;
pub mod design;
pub mod error;
pub mod normal;
pub mod power;
pub mod sim;
pub mod variance;

pub use calibration::{
    calibrate_binary, calibrate_continuous, estimate_moments, plugin_lambda, plugin_lambda_clamped, BinaryMetrics,
    ContinuousMetric, LambdaClamp, MomentSet, PilotSample, Tuning,
};
pub use design::{variance_threshold, wald_power, DesignInputs, VarianceThreshold};
pub use error::{Error, Result, Warning};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use power::{
    classical_n, classical_plan, classical_power, kappa_scale, meets_threshold, paired_n, plan_mean, ppi_pp_n, ppi_pp_power, regression_contrast_n,
    regression_contrast_power, rule_of_thumb, rule_of_thumb_error, two_by_two_n, two_by_two_power, two_sample_n,
    vanilla_power, vanilla_ppi_n, Estimator, PlanResult, TwoSampleDesign,
};
pub use sim::config::{run_experiment, SimConfig};
pub use sim::report::SimResult;
pub use variance::{
    contrast_lambda_star, contrast_optimal_variance, contrast_variance, lambda_star, log_effect_variance,
    log_or_variance, log_rr_variance, optimal_variance, paired_variance, ppi_pp_variance, two_sample_variance,
    vanilla_variance, ContrastBlocks, GroupArm, Measure, Pool, SampleBudget, TwoByTwoSpec, TwoGroupMoments,
};

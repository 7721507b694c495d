//! Monte Carlo validation harness.

pub mod bivariate;
pub mod config;
pub mod dgp;
pub mod experiment;
pub mod mean;
pub mod regression;
pub mod report;
pub mod rng;

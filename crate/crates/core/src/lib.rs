//! Gaussian parametric and multiplier bootstrap for high-dimensional
//! ℓp-statistics.
//!
//! The crate covers the ℓp functionals and their smooth surrogates,
//! structured covariance estimation, Gaussian and copula sampling, the
//! bootstrap engines, tests and confidence sets for mean vectors, Monte Carlo
//! probes of the underlying Gaussian inequalities, and the experiment harness
//! used by the `hdboot` command line tool.

pub mod bootstrap;
pub mod covariance;
pub mod diagnostics;
mod error;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod lp;
pub mod rng;
pub mod sampling;

pub use bootstrap::{
    empirical_quantile, gmb_draws, gpb_draws, ks_distance, proxy_draws, DistributionMeta,
    EmpiricalDistribution, Engine,
};
pub use covariance::{
    band, correlation_threshold, cov_diagnostics, cov_error, cv_select_lambda, psd_project,
    sample_covariance, threshold, CovDiagnostics, CovError, CovEstimator, CovMatrix, CvSelection,
    DataMatrix, Provenance, ThresholdKind,
};
pub use diagnostics::{comparison_ks, levy_concentration, ProbeReport};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentKind, Method, Table};
pub use inference::{
    confidence_set, lp_ball_volume, run_test, test_statistic, BallVolume, ConfidenceSet,
    TestResult, TestSpec,
};
pub use lp::{lp_norm, mp_gradient, mp_higher_derivatives, smooth_max, smooth_norm, LpExponent};
pub use rng::RngSeed;
pub use sampling::{
    build_block_covariance, copula_covariance, copula_sample, factorize_psd, marginal_quantile,
    mvn_sample, normal_cdf, MarginalKind, PsdFactor,
};

//! Tests of linear restrictions `H₀: Mμ = m₀` on a high-dimensional mean,
//! simultaneous confidence sets, and the volume of ℓp-balls.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::bootstrap::{gpb_draws, EmpiricalDistribution};
use crate::covariance::{CovEstimator, CovMatrix, DataMatrix};
use crate::error::{Error, Result};
use crate::lp::{norm_resolved, LpExponent};
use crate::rng::RngSeed;

/// A test of `H₀: Mμ = m₀` at level `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    /// `d′ × d` restriction map.
    pub m: DMatrix<f64>,
    pub m0: Vec<f64>,
    pub p: LpExponent,
    pub alpha: f64,
    pub estimator: CovEstimator,
    pub b: usize,
    pub seed: RngSeed,
}

impl TestSpec {
    /// `H₀: μ = 0` in dimension `d`.
    pub fn zero_mean(
        d: usize,
        p: LpExponent,
        alpha: f64,
        estimator: CovEstimator,
        b: usize,
        seed: RngSeed,
    ) -> Self {
        Self {
            m: DMatrix::identity(d, d),
            m0: vec![0.0; d],
            p,
            alpha,
            estimator,
            b,
            seed,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.m.ncols(),
            });
        }
        if self.m0.len() != self.m.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.m.nrows(),
                actual: self.m0.len(),
            });
        }
        check_alpha(self.alpha)?;
        if self.b == 0 {
            return Err(Error::param("B", "must be positive"));
        }
        if self.m.iter().chain(&self.m0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("restriction"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Outcome of [`run_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// The `1 − α` bootstrap quantile.
    pub critical_value: f64,
    pub reject: bool,
    /// Fraction of bootstrap draws at or above the statistic.
    pub p_value: f64,
    pub alpha: f64,
    pub estimator: CovEstimator,
    pub seed: RngSeed,
    pub distribution: EmpiricalDistribution,
}

impl TestResult {
    pub const CSV_HEADER: &'static str = "statistic,critical_value,p_value,reject,p,alpha,estimator,B,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.statistic,
            self.critical_value,
            self.p_value,
            self.reject,
            self.distribution.meta.p.label(),
            self.alpha,
            self.estimator,
            self.distribution.len(),
            self.seed
        )
    }
}

/// `S = ‖n^{-1/2} Σ (M X_i − m₀)‖_p`.
pub fn test_statistic(x: &DataMatrix, m: &DMatrix<f64>, m0: &[f64], p: LpExponent) -> Result<f64> {
    let v = restricted_scaled_sum(x, m, m0)?;
    Ok(norm_resolved(&v, p.resolve(v.len())?))
}

/// The vector `n^{-1/2} Σ (M X_i − m₀)`.
pub fn restricted_scaled_sum(x: &DataMatrix, m: &DMatrix<f64>, m0: &[f64]) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("data matrix"));
    }
    if m.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: m.ncols(),
        });
    }
    if m0.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m0.len(),
        });
    }
    let sums: Vec<f64> = x.column_iter().map(|c| c.sum()).collect();
    let rn = (n as f64).sqrt();
    Ok((0..m.nrows())
        .map(|i| {
            let ms: f64 = (0..m.ncols()).map(|j| m[(i, j)] * sums[j]).sum();
            (ms - n as f64 * m0[i]) / rn
        })
        .collect())
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.iter().enumerate().all(|(k, v)| {
        let (i, j) = (k % m.nrows(), k / m.nrows());
        *v == if i == j { 1.0 } else { 0.0 }
    })
}

/// Estimates `Σ̂` (stream 0 of the seed), forms `Ω̂ = M Σ̂ Mᵀ`, and calibrates
/// the statistic against `B` parametric bootstrap draws (stream 1).
pub fn run_test(x: &DataMatrix, spec: &TestSpec) -> Result<TestResult> {
    spec.validate(x.ncols())?;
    let statistic = test_statistic(x, &spec.m, &spec.m0, spec.p)?;
    let sigma = spec.estimator.estimate(x, &spec.seed.child(0))?;
    let omega = restricted_covariance(&sigma, &spec.m)?;
    let distribution = gpb_draws(&omega, spec.p, spec.b, &spec.seed.child(1))?;
    let critical_value = distribution.quantile(1.0 - spec.alpha)?;
    Ok(TestResult {
        statistic,
        critical_value,
        reject: statistic >= critical_value,
        p_value: distribution.upper_fraction(statistic),
        alpha: spec.alpha,
        estimator: spec.estimator.clone(),
        seed: spec.seed.clone(),
        distribution,
    })
}

/// `M Σ Mᵀ`, returning `Σ` itself when `M` is the identity.
pub fn restricted_covariance(sigma: &CovMatrix, m: &DMatrix<f64>) -> Result<CovMatrix> {
    if is_identity(m) && m.nrows() == sigma.dim() {
        Ok(sigma.clone())
    } else {
        sigma.conjugate(m)
    }
}

/// `{μ : ‖center − μ‖_p ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub p: LpExponent,
}

impl ConfidenceSet {
    pub fn contains(&self, mu: &[f64]) -> Result<bool> {
        if mu.len() != self.center.len() {
            return Err(Error::DimensionMismatch {
                expected: self.center.len(),
                actual: mu.len(),
            });
        }
        let diff: Vec<f64> = self.center.iter().zip(mu).map(|(a, b)| a - b).collect();
        Ok(norm_resolved(&diff, self.p.resolve(diff.len())?) <= self.radius)
    }
}

/// Sample mean with radius `c*(1 − α)/√n`, where `c*` comes from the
/// parametric bootstrap on the estimated covariance (seed streams as in
/// [`run_test`]).
pub fn confidence_set(
    x: &DataMatrix,
    p: LpExponent,
    alpha: f64,
    estimator: &CovEstimator,
    b: usize,
    seed: &RngSeed,
) -> Result<ConfidenceSet> {
    check_alpha(alpha)?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("data matrix"));
    }
    let center: Vec<f64> = x.column_iter().map(|c| c.sum() / n as f64).collect();
    let sigma = estimator.estimate(x, &seed.child(0))?;
    let dist = gpb_draws(&sigma, p, b, &seed.child(1))?;
    let radius = dist.quantile(1.0 - alpha)? / (n as f64).sqrt();
    Ok(ConfidenceSet { center, radius, p })
}

/// Volume of an ℓp-ball, with the logarithm always available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallVolume {
    pub log_volume: f64,
    /// `None` when the volume under- or overflows `f64`.
    pub volume: Option<f64>,
}

/// `(2r)^d Γ(1 + 1/p)^d / Γ(1 + d/p)`, computed in log space. `p` may be
/// infinite (the cube).
pub fn lp_ball_volume(d: usize, p: f64, r: f64) -> Result<BallVolume> {
    if d == 0 {
        return Err(Error::param("d", "must be positive"));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("{p}")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param("r", format!("must be positive and finite, got {r}")));
    }
    let df = d as f64;
    let log_volume = df * (2.0 * r).ln() + df * ln_gamma(1.0 + 1.0 / p) - ln_gamma(1.0 + df / p);
    let v = log_volume.exp();
    let volume = (v.is_finite() && v > 0.0).then_some(v);
    Ok(BallVolume { log_volume, volume })
}

//! Monte Carlo probes of the anti-concentration and Gaussian comparison
//! inequalities for ℓp-norms. The probes check the direction of each
//! inequality (`estimate ≤ C · bound`), not its unknown absolute constant.

use crate::bootstrap::{ks_sorted, proxy_draws};
use crate::covariance::{cov_diagnostics, cov_error, CovMatrix, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::lp::{norm_resolved, LpExponent};
use crate::rng::RngSeed;

/// Default constant multiplying the theoretical bound.
pub const DEFAULT_PROBE_C: f64 = 10.0;

/// Smallest accepted Monte Carlo size.
pub const MIN_PROBE_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub probe: String,
    pub instance: String,
    pub estimate: f64,
    /// Right-hand side of the inequality at this instance, without `C`.
    pub bound: f64,
    pub c: f64,
    pub n_mc: usize,
    /// `estimate ≤ c · bound`.
    pub pass: bool,
}

impl ProbeReport {
    pub const CSV_HEADER: &'static str = "probe,instance,estimate,bound,C,pass";

    fn new(probe: &str, instance: String, estimate: f64, bound: f64, c: f64, n_mc: usize) -> Self {
        Self {
            probe: probe.to_string(),
            instance,
            estimate,
            bound,
            c,
            n_mc,
            pass: estimate <= c * bound,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.probe, self.instance, self.estimate, self.bound, self.c, self.pass
        )
    }
}

fn check_probe_args(n_mc: usize, c: f64) -> Result<()> {
    if n_mc < MIN_PROBE_DRAWS {
        return Err(Error::param(
            "n_mc",
            format!("must be at least {MIN_PROBE_DRAWS}, got {n_mc}"),
        ));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("C", format!("must be positive, got {c}")));
    }
    Ok(())
}

fn sd_vector(s: &CovMatrix) -> Vec<f64> {
    s.diag().into_iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// `ω_p(d, r)`: `√(p r^{1/p})` for a finite exponent, `√(log d)` for
/// `LogDim` and `Infinity`.
pub fn omega(p: LpExponent, d: usize, rank: usize) -> Result<f64> {
    match p {
        LpExponent::Finite(q) => Ok((q * (rank.max(1) as f64).powf(1.0 / q)).sqrt()),
        LpExponent::LogDim | LpExponent::Infinity => {
            if d < 2 {
                return Err(Error::param("d", "log-dimension scale needs d ≥ 2"));
            }
            Ok((d as f64).ln().sqrt())
        }
    }
}

/// Largest fraction of a sorted sample inside any closed window of the
/// given width.
pub fn max_window_mass(sorted: &[f64], width: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let mut best = 0usize;
    let mut hi = 0usize;
    for lo in 0..sorted.len() {
        if hi < lo {
            hi = lo;
        }
        while hi < sorted.len() && sorted[hi] <= sorted[lo] + width {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best as f64 / sorted.len() as f64
}

/// Estimates `sup_t P(t ≤ ‖X‖_p ≤ t + ε‖σ‖_p/ω_p(d, r))` for
/// `X ~ N(0, S)` from `n_mc` draws; the bound is `ε`.
pub fn levy_concentration(
    s: &CovMatrix,
    p: LpExponent,
    eps: f64,
    n_mc: usize,
    rng: &RngSeed,
    c: f64,
) -> Result<ProbeReport> {
    check_probe_args(n_mc, c)?;
    if !(eps > 0.0) || eps.is_nan() {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let d = s.dim();
    let instance = format!("d={d};p={};eps={eps}", p.label());
    let sd = sd_vector(s);
    let sigma_p = norm_resolved(&sd, p.resolve(d)?);
    if sigma_p == 0.0 {
        return Ok(ProbeReport::new("levy", instance, 1.0, eps, c, n_mc));
    }
    let rank = cov_diagnostics(s, DEFAULT_RANK_TOL)?.rank;
    let width = eps * sigma_p / omega(p, d, rank)?;
    let draws = proxy_draws(s, p, n_mc, rng)?;
    let estimate = max_window_mass(draws.samples(), width);
    Ok(ProbeReport::new("levy", instance, estimate, eps, c, n_mc))
}

/// Right-hand side of the Gaussian comparison inequality.
///
/// Finite `p`: `min` over `Z ∈ {X, Y}` of `√(p² d^{1/p} r_Z^{1/p} Δ_p) / ‖σ_Z‖_p`.
/// `LogDim` and `Infinity`: `log d · √(min(Δ_op, Δ_∞)) / max(‖σ_X‖_∞, ‖σ_Y‖_∞)`.
pub fn comparison_bound(sx: &CovMatrix, sy: &CovMatrix, p: LpExponent) -> Result<f64> {
    let d = sx.dim();
    if sy.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: sy.dim(),
        });
    }
    match p {
        LpExponent::Finite(q) => {
            let err = cov_error(sx, sy, &[p])?;
            let delta_p = err.delta(p).unwrap_or(0.0);
            let side = |s: &CovMatrix| -> Result<f64> {
                let r = cov_diagnostics(s, DEFAULT_RANK_TOL)?.rank.max(1) as f64;
                let sigma = norm_resolved(&sd_vector(s), q);
                let num = (q * q * (d as f64).powf(1.0 / q) * r.powf(1.0 / q) * delta_p).sqrt();
                Ok(if sigma > 0.0 { num / sigma } else { f64::INFINITY })
            };
            Ok(side(sx)?.min(side(sy)?))
        }
        LpExponent::LogDim | LpExponent::Infinity => {
            let err = cov_error(sx, sy, &[LpExponent::Infinity])?;
            let delta = err.delta_op.min(err.delta(LpExponent::Infinity).unwrap_or(0.0));
            let sig = |s: &CovMatrix| sd_vector(s).into_iter().fold(0.0f64, f64::max);
            let denom = sig(sx).max(sig(sy));
            if denom == 0.0 {
                return Ok(if delta == 0.0 { 0.0 } else { f64::INFINITY });
            }
            Ok((d as f64).ln() * delta.sqrt() / denom)
        }
    }
}

/// KS distance between `n_mc` independent draws of `‖X‖_p` (stream 0)
/// and `‖Y‖_p` (stream 1), `X ~ N(0, Sx)`, `Y ~ N(0, Sy)`, against
/// [`comparison_bound`].
pub fn comparison_ks(
    sx: &CovMatrix,
    sy: &CovMatrix,
    p: LpExponent,
    n_mc: usize,
    rng: &RngSeed,
    c: f64,
) -> Result<ProbeReport> {
    check_probe_args(n_mc, c)?;
    let bound = comparison_bound(sx, sy, p)?;
    let a = proxy_draws(sx, p, n_mc, &rng.child(0))?;
    let b = proxy_draws(sy, p, n_mc, &rng.child(1))?;
    let estimate = ks_sorted(a.samples(), b.samples());
    let instance = format!("d={};p={}", sx.dim(), p.label());
    Ok(ProbeReport::new("comparison", instance, estimate, bound, c, n_mc))
}

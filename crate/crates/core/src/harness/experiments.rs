//! Monte Carlo drivers for the simulation study.
//!
//! Data follow the Gaussian-copula design with a permuted block rank-one
//! covariance. Each replicate draws one data set and computes, for every
//! requested method and exponent, the distribution that calibrates the
//! statistic. Replicate `i` uses sub-stream `i`, so results do not depend on
//! the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use super::config::{sparse_support, ExperimentConfig, ExperimentKind, Method};
use super::Table;
use crate::bootstrap::{
    gmb_draws_multi, gpb_draws_multi, ks_distance, proxy_draws_multi, DistributionMeta,
    EmpiricalDistribution, Engine,
};
use crate::covariance::{CovMatrix, DataMatrix};
use crate::diagnostics::{comparison_ks, levy_concentration};
use crate::error::{Error, Result};
use crate::lp::{norm_resolved, LpExponent};
use crate::rng::RngSeed;
use crate::sampling::{build_block_covariance, copula_covariance, copula_sample, MarginalKind};

/// The data-generating design shared by all replicates.
#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    /// Covariance of the latent Gaussian vectors.
    pub latent: CovMatrix,
    /// Covariance of the observed vectors.
    pub truth: CovMatrix,
    pub marginal: MarginalKind,
    pub standardize: bool,
}

impl Design {
    /// Builds the design; the permutation comes from stream 0 of `seed`.
    pub fn new(
        n: usize,
        d: usize,
        block: usize,
        decay: f64,
        marginal: MarginalKind,
        standardize: bool,
        seed: &RngSeed,
    ) -> Result<Self> {
        let latent = build_block_covariance(d, block, decay, Some(&seed.child(0)))?;
        let truth = copula_covariance(&latent, marginal, standardize)?;
        Ok(Self {
            n,
            latent,
            truth,
            marginal,
            standardize,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(
            cfg.n,
            cfg.d,
            cfg.block,
            cfg.decay,
            cfg.marginal,
            cfg.standardize,
            &RngSeed::new(cfg.seed),
        )
    }

    pub fn dim(&self) -> usize {
        self.latent.dim()
    }

    /// One data set of `n` centred observations.
    pub fn sample(&self, seed: &RngSeed) -> Result<DataMatrix> {
        copula_sample(&self.latent, self.marginal, self.n, seed, self.standardize)
    }
}

/// `n^{-1/2} Σ X_i`.
pub fn scaled_sum(x: &DataMatrix) -> Vec<f64> {
    let rn = (x.nrows() as f64).sqrt();
    x.column_iter().map(|c| c.sum() / rn).collect()
}

/// One Monte Carlo replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub rep: usize,
    /// `n^{-1/2} Σ X_i` of the data set drawn under `μ = 0`.
    pub scaled_sum: Vec<f64>,
    /// `draws[m][k]`: method `m`, exponent `k`.
    pub draws: Vec<Vec<EmpiricalDistribution>>,
}

/// Replicates `reps` of the design. Replicate `i` takes its data from
/// stream `(1, i, 0)` of `seed` and method `m` from stream `(1, i, m + 1)`.
pub fn simulate_replicates(
    design: &Design,
    methods: &[Method],
    ps: &[LpExponent],
    b: usize,
    reps: Range<usize>,
    seed: &RngSeed,
) -> Result<Vec<Replicate>> {
    reps.into_par_iter()
        .map(|rep| {
            let rs = seed.descend(&[1, rep as u64]);
            let x = design.sample(&rs.child(0))?;
            let draws = methods
                .iter()
                .enumerate()
                .map(|(m, method)| {
                    let ms = rs.child(m as u64 + 1);
                    match method {
                        Method::Proxy => proxy_draws_multi(&design.truth, ps, b, &ms),
                        Method::Gmb => gmb_draws_multi(&x, ps, b, &ms),
                        Method::Gpb(est) => {
                            let sigma = est.estimate(&x, &ms.child(0))?;
                            gpb_draws_multi(&sigma, ps, b, &ms.child(1))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Replicate {
                rep,
                scaled_sum: scaled_sum(&x),
                draws,
            })
        })
        .collect()
}

/// Monte Carlo law of `T = ‖n^{-1/2} Σ X_i‖_p` from `reps` independent data
/// sets (stream `(2, i)` of `seed`), one distribution per exponent.
pub fn truth_distributions(
    design: &Design,
    ps: &[LpExponent],
    reps: usize,
    seed: &RngSeed,
) -> Result<Vec<EmpiricalDistribution>> {
    let d = design.dim();
    let resolved: Vec<f64> = ps.iter().map(|p| p.resolve(d)).collect::<Result<_>>()?;
    let stats: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let x = design.sample(&seed.descend(&[2, i as u64]))?;
            let s = scaled_sum(&x);
            Ok(resolved.iter().map(|&p| norm_resolved(&s, p)).collect())
        })
        .collect::<Result<_>>()?;
    ps.iter()
        .enumerate()
        .map(|(k, &p)| {
            EmpiricalDistribution::new(
                stats.iter().map(|row| row[k]).collect(),
                DistributionMeta {
                    engine: Engine::Truth,
                    p,
                    seed: seed.child(2),
                },
            )
        })
        .collect()
}

fn check_kind(cfg: &ExperimentConfig, ok: &[ExperimentKind]) -> Result<()> {
    cfg.validate()?;
    if !ok.contains(&cfg.kind) {
        return Err(Error::Config(format!("experiment kind `{}` does not fit this driver", cfg.kind)));
    }
    Ok(())
}

/// Rows `rep,p,estimator,ks` comparing each method with the truth.
pub fn ks_rows(
    reps: &[Replicate],
    truth: &[EmpiricalDistribution],
    methods: &[Method],
    ps: &[LpExponent],
) -> Table {
    let mut t = Table::new("rep,p,estimator,ks");
    for r in reps {
        for (k, p) in ps.iter().enumerate() {
            for (m, method) in methods.iter().enumerate() {
                let ks = ks_distance(&truth[k], &r.draws[m][k]);
                t.push(format!("{},{},{},{}", r.rep, p.label(), method, ks));
            }
        }
    }
    t
}

/// Kolmogorov–Smirnov distances between the law of the statistic and each
/// method's estimate.
pub fn run_ks_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    check_kind(cfg, &[ExperimentKind::Ks])?;
    let seed = RngSeed::new(cfg.seed);
    let design = Design::from_config(cfg)?;
    let truth = truth_distributions(&design, &cfg.p_list, cfg.truth_reps, &seed)?;
    let reps = simulate_replicates(&design, &cfg.estimators, &cfg.p_list, cfg.b, 0..cfg.mc_reps, &seed)?;
    Ok(ks_rows(&reps, &truth, &cfg.estimators, &cfg.p_list))
}

/// Coverage indicator `‖n^{-1/2} Σ X_i‖_p ≤ q(1 − α)` for every replicate,
/// method and exponent, i.e. whether the confidence set contains `μ = 0`.
pub fn coverage_indicators(
    reps: &[Replicate],
    m: usize,
    k: usize,
    p: LpExponent,
    alpha: f64,
) -> Result<Vec<(f64, f64, bool)>> {
    reps.iter()
        .map(|r| {
            let stat = norm_resolved(&r.scaled_sum, p.resolve(r.scaled_sum.len())?);
            let q = r.draws[m][k].quantile(1.0 - alpha)?;
            Ok((stat, q, stat <= q))
        })
        .collect()
}

/// Mean and binomial standard error of indicators.
pub fn proportion(hits: usize, total: usize) -> (f64, f64) {
    let f = hits as f64 / total as f64;
    (f, (f * (1.0 - f) / total as f64).sqrt())
}

/// Rows `rep,p,estimator,statistic,quantile,coverage,mc_se`; the `rep = all`
/// rows carry the mean coverage and its binomial standard error.
pub fn coverage_rows(reps: &[Replicate], methods: &[Method], ps: &[LpExponent], alpha: f64) -> Result<Table> {
    let mut t = Table::new("rep,p,estimator,statistic,quantile,coverage,mc_se");
    let mut summary = Vec::new();
    for (k, &p) in ps.iter().enumerate() {
        for (m, method) in methods.iter().enumerate() {
            let ind = coverage_indicators(reps, m, k, p, alpha)?;
            for (r, (stat, q, c)) in reps.iter().zip(&ind) {
                t.push(format!("{},{},{},{},{},{},", r.rep, p.label(), method, stat, q, u8::from(*c)));
            }
            let hits = ind.iter().filter(|v| v.2).count();
            let (f, se) = proportion(hits, ind.len());
            summary.push(format!("all,{},{},,,{},{}", p.label(), method, f, se));
        }
    }
    for s in summary {
        t.push(s);
    }
    Ok(t)
}

/// Coverage of the `1 − α` confidence sets under `μ = 0`.
pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    check_kind(cfg, &[ExperimentKind::Coverage])?;
    let design = Design::from_config(cfg)?;
    let reps = simulate_replicates(
        &design,
        &cfg.estimators,
        &cfg.p_list,
        cfg.b,
        0..cfg.mc_reps,
        &RngSeed::new(cfg.seed),
    )?;
    coverage_rows(&reps, &cfg.estimators, &cfg.p_list, cfg.alpha)
}

/// Mean vector of the alternative at signal `delta`: all coordinates for
/// the dense family, the first `2⌈√(log d)/2⌉` for the sparse one.
pub fn alternative_mean(kind: ExperimentKind, d: usize, delta: f64) -> Result<Vec<f64>> {
    let support = match kind {
        ExperimentKind::PowerDense => d,
        ExperimentKind::PowerSparse => sparse_support(d).min(d),
        _ => return Err(Error::Config(format!("`{kind}` has no alternative"))),
    };
    Ok((0..d).map(|j| if j < support { delta } else { 0.0 }).collect())
}

/// Rejection frequencies `(delta, p, power, mc_se)` using method `m`.
///
/// Data under the alternative are `X_i + μ(δ)`. The covariance estimates and
/// bootstrap laws are computed from centred data, so they equal those of the
/// null replicate exactly and only the statistic
/// `‖n^{-1/2} Σ X_i + √n μ(δ)‖_p` changes with δ.
pub fn power_table(
    reps: &[Replicate],
    m: usize,
    ps: &[LpExponent],
    kind: ExperimentKind,
    deltas: &[f64],
    n: usize,
    alpha: f64,
) -> Result<Vec<(f64, LpExponent, f64, f64)>> {
    let d = reps.first().map(|r| r.scaled_sum.len()).ok_or(Error::Empty("replicates"))?;
    let rn = (n as f64).sqrt();
    let crit: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| ps.iter().enumerate().map(|(k, _)| r.draws[m][k].quantile(1.0 - alpha)).collect())
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &delta in deltas {
        let mu = alternative_mean(kind, d, delta)?;
        for (k, &p) in ps.iter().enumerate() {
            let pr = p.resolve(d)?;
            let hits = reps
                .iter()
                .zip(&crit)
                .filter(|(r, c)| {
                    let shifted: Vec<f64> = r.scaled_sum.iter().zip(&mu).map(|(s, u)| s + rn * u).collect();
                    norm_resolved(&shifted, pr) >= c[k]
                })
                .count();
            let (f, se) = proportion(hits, reps.len());
            out.push((delta, p, f, se));
        }
    }
    Ok(out)
}

/// Power curves over `delta_grid`, calibrated by the first parametric
/// bootstrap method in the configuration.
pub fn run_power_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    check_kind(cfg, &[ExperimentKind::PowerDense, ExperimentKind::PowerSparse])?;
    let method = cfg
        .estimators
        .iter()
        .find(|m| matches!(m, Method::Gpb(_)))
        .cloned()
        .ok_or_else(|| Error::Config("power experiments need a gpb estimator".into()))?;
    let design = Design::from_config(cfg)?;
    let reps = simulate_replicates(
        &design,
        std::slice::from_ref(&method),
        &cfg.p_list,
        cfg.b,
        0..cfg.mc_reps,
        &RngSeed::new(cfg.seed),
    )?;
    let rows = power_table(&reps, 0, &cfg.p_list, cfg.kind, &cfg.delta_grid, cfg.n, cfg.alpha)?;
    let mut t = Table::new("delta,p,power,mc_se");
    for (delta, p, f, se) in rows {
        t.push(format!("{},{},{},{}", delta, p.label(), f, se));
    }
    Ok(t)
}

/// Block size of the probe design: the default block size, raised to the
/// smallest divisor of `d` that is at least two so that the design is never
/// the identity.
fn probe_block(d: usize) -> usize {
    let b0 = super::config::default_block(d).max(2);
    (b0..=d).find(|b| d % b == 0).unwrap_or(1)
}

/// Lévy-concentration probes on `N(0, I_d)` and on the block design for
/// every `(d, p, ε)` in the configuration, followed by comparison probes of
/// `I_d` against `c·I_d` for `c ∈ {1.1, 1.5, 2}` and against the block
/// design (all diagonals one).
pub fn run_probe_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    check_kind(cfg, &[ExperimentKind::Probe])?;
    let seed = RngSeed::new(cfg.seed);
    let mut t = Table::new(crate::diagnostics::ProbeReport::CSV_HEADER);
    let mut rows = Vec::new();
    for (a, &d) in cfg.probe_dims.iter().enumerate() {
        let block = build_block_covariance(d, probe_block(d), cfg.decay, Some(&seed.descend(&[0, a as u64])))?;
        let cases = [("identity", CovMatrix::identity(d)), ("block", block)];
        for (ci, (name, s)) in cases.iter().enumerate() {
            for (pi, &p) in cfg.probe_ps.iter().enumerate() {
                for (ei, &eps) in cfg.probe_eps.iter().enumerate() {
                    let rs = seed.descend(&[1, a as u64, ci as u64, pi as u64, ei as u64]);
                    let mut r = levy_concentration(s, p, eps, cfg.n_mc, &rs, cfg.probe_c)?;
                    r.instance = format!("{name};{}", r.instance);
                    rows.push(r);
                }
            }
        }
        let id = CovMatrix::identity(d);
        let comparisons: Vec<(String, CovMatrix)> = [1.1, 1.5, 2.0]
            .iter()
            .map(|&c| Ok((format!("scaled-{c}"), id.scaled(c)?)))
            .chain(std::iter::once(Ok(("block".to_string(), cases[1].1.clone()))))
            .collect::<Result<_>>()?;
        let mut ps = cfg.probe_ps.clone();
        ps.extend([LpExponent::LogDim, LpExponent::Infinity]);
        for (ci, (name, sy)) in comparisons.iter().enumerate() {
            for (pi, &p) in ps.iter().enumerate() {
                let rs = seed.descend(&[2, a as u64, ci as u64, pi as u64]);
                let mut r = comparison_ks(&id, sy, p, cfg.n_mc, &rs, cfg.probe_c)?;
                r.instance = format!("{name};{}", r.instance);
                rows.push(r);
            }
        }
    }
    for r in rows {
        t.push(r.csv_row());
    }
    Ok(t)
}

/// Dispatches on the configured kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    match cfg.kind {
        ExperimentKind::Ks => run_ks_experiment(cfg),
        ExperimentKind::Coverage => run_coverage_experiment(cfg),
        ExperimentKind::PowerDense | ExperimentKind::PowerSparse => run_power_experiment(cfg),
        ExperimentKind::Probe => run_probe_experiment(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovEstimator;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(kind);
        c.n = 30;
        c.d = 12;
        c.block = 2;
        c.mc_reps = 3;
        c.b = 50;
        c.truth_reps = 40;
        c.n_mc = 1000;
        c.probe_dims = vec![6];
        c.estimators = vec![
            Method::Proxy,
            Method::Gmb,
            Method::Gpb(CovEstimator::Naive),
            Method::Gpb(CovEstimator::CorrelationCv { folds: 2, grid_size: 5 }),
        ];
        c.delta_grid = super::super::config::default_delta_grid(kind, c.n, c.d);
        c
    }

    #[test]
    fn smoke_with_single_draws() {
        let mut c = small(ExperimentKind::Ks);
        c.mc_reps = 1;
        c.truth_reps = 1;
        c.b = 1;
        let t = run_ks_experiment(&c).unwrap();
        assert_eq!(t.rows.len(), c.p_list.len() * c.estimators.len());
        for row in &t.rows {
            let ks: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&ks));
        }
    }

    #[test]
    fn experiments_are_deterministic() {
        for kind in [ExperimentKind::Ks, ExperimentKind::Coverage, ExperimentKind::PowerSparse] {
            let c = small(kind);
            let a = run_experiment(&c).unwrap().to_csv();
            let b = run_experiment(&c).unwrap().to_csv();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn coverage_has_summary_rows() {
        let c = small(ExperimentKind::Coverage);
        let t = run_coverage_experiment(&c).unwrap();
        let summaries = t.rows.iter().filter(|r| r.starts_with("all,")).count();
        assert_eq!(summaries, c.p_list.len() * c.estimators.len());
        assert_eq!(t.rows.len(), summaries * (c.mc_reps + 1));
    }

    #[test]
    fn power_rows_cover_grid() {
        let c = small(ExperimentKind::PowerDense);
        let t = run_power_experiment(&c).unwrap();
        assert_eq!(t.rows.len(), c.delta_grid.len() * c.p_list.len());
    }

    #[test]
    fn alternative_means() {
        let mu = alternative_mean(ExperimentKind::PowerSparse, 200, 0.5).unwrap();
        assert_eq!(mu.iter().filter(|v| **v != 0.0).count(), 4);
        let mu = alternative_mean(ExperimentKind::PowerDense, 5, 0.5).unwrap();
        assert!(mu.iter().all(|v| *v == 0.5));
        assert!(alternative_mean(ExperimentKind::Ks, 5, 0.5).is_err());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let c = small(ExperimentKind::Ks);
        assert!(run_coverage_experiment(&c).unwrap_err().is_config());
    }

    #[test]
    fn probe_experiment_runs() {
        let c = small(ExperimentKind::Probe);
        let t = run_probe_experiment(&c).unwrap();
        assert!(!t.rows.is_empty());
        assert_eq!(t.header, crate::diagnostics::ProbeReport::CSV_HEADER);
    }
}

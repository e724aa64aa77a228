//! Bootstrap engines and empirical distributions.
//!
//! The parametric bootstrap draws `V ~ N(0, Σ̂)`, the multiplier bootstrap
//! draws `n^{-1/2} Σ g_i (X_i − X̄)`, and the Gaussian proxy is the
//! parametric engine run with the true covariance. Every engine can push one
//! set of Gaussian draws through several exponents at once.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::{centered, CovMatrix, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::matmul;
use crate::lp::{norm_resolved, LpExponent};
use crate::rng::RngSeed;
use crate::sampling::{factor_of, standard_normal_matrix};

/// Upper limit on the number of draws kept in memory.
pub const MAX_DRAWS: usize = 1_000_000;

/// Draws are generated in chunks of this many, each from its own sub-stream.
const CHUNK: usize = 1024;

/// Which procedure produced a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Gaussian parametric bootstrap from an estimated covariance.
    Gpb,
    /// Gaussian multiplier bootstrap.
    Gmb,
    /// Gaussian proxy with the true covariance.
    Proxy,
    /// Monte Carlo draws of the statistic itself.
    Truth,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Gpb => "gpb",
            Engine::Gmb => "gmb",
            Engine::Proxy => "proxy",
            Engine::Truth => "truth",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gpb" => Ok(Engine::Gpb),
            "gmb" => Ok(Engine::Gmb),
            "proxy" => Ok(Engine::Proxy),
            "truth" => Ok(Engine::Truth),
            _ => Err(Error::Config(format!("unknown engine `{s}`"))),
        }
    }
}

/// Source descriptor of an [`EmpiricalDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMeta {
    pub engine: Engine,
    pub p: LpExponent,
    pub seed: RngSeed,
}

/// Sorted sample of a nonnegative statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    pub meta: DistributionMeta,
}

impl EmpiricalDistribution {
    /// Sorts `samples`; they must be nonempty, finite and nonnegative.
    pub fn new(mut samples: Vec<f64>, meta: DistributionMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("distribution samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution samples"));
        }
        if samples.iter().any(|v| *v < 0.0) {
            return Err(Error::param("samples", "norm draws must be nonnegative"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, meta })
    }

    /// The sorted samples.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Empirical distribution function `#{draws ≤ t} / B`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.samples.partition_point(|v| *v <= t) as f64 / self.len() as f64
    }

    /// `#{draws ≥ t} / B`.
    pub fn upper_fraction(&self, t: f64) -> f64 {
        (self.len() - self.samples.partition_point(|v| *v < t)) as f64 / self.len() as f64
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        empirical_quantile(self, alpha)
    }

    /// Writes the one-column CSV form; the header cell names engine, p, B
    /// and seed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "engine={};p={};B={};seed={}",
            self.meta.engine,
            self.meta.p.label(),
            self.len(),
            self.meta.seed
        )?;
        for v in &self.samples {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`EmpiricalDistribution::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Empty("distribution file"))??;
        let mut engine = None;
        let mut p = None;
        let mut seed = None;
        for field in header.trim().split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                reason: format!("malformed header field `{field}`"),
            })?;
            match k {
                "engine" => engine = Some(v.parse::<Engine>()?),
                "p" => p = Some(v.parse::<LpExponent>()?),
                "seed" => seed = Some(parse_seed(v)?),
                "B" => {}
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        reason: format!("unknown header key `{k}`"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 1,
            reason: format!("header lacks `{what}`"),
        };
        let meta = DistributionMeta {
            engine: engine.ok_or_else(|| missing("engine"))?,
            p: p.ok_or_else(|| missing("p"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        };
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(line.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: i + 2,
                reason: e.to_string(),
            })?);
        }
        Self::new(samples, meta)
    }
}

/// Parses the `master/i/j` form produced by `RngSeed`'s `Display`.
pub fn parse_seed(s: &str) -> Result<RngSeed> {
    let mut parts = s.trim().split('/');
    let bad = || Error::Config(format!("invalid seed `{s}`"));
    let master = parts.next().ok_or_else(bad)?.parse::<u64>().map_err(|_| bad())?;
    let path = parts
        .map(|v| v.parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RngSeed::new(master).descend(&path))
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 || b > MAX_DRAWS {
        return Err(Error::param("B", format!("must lie in [1, {MAX_DRAWS}], got {b}")));
    }
    Ok(())
}

/// Norms of `B` draws of `L g`, `g ~ N(0, I_r)`, for every exponent in `ps`
/// (already resolved). Chunk `c` of the draws uses sub-stream `c` of `seed`,
/// so the output does not depend on the thread count.
pub(crate) fn gaussian_norms(l: &DMatrix<f64>, ps: &[f64], b: usize, seed: &RngSeed) -> Vec<Vec<f64>> {
    let d = l.nrows();
    let r = l.ncols();
    let nchunks = b.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<Vec<f64>>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(b - c * CHUNK);
            if r == 0 {
                return vec![vec![0.0; len]; ps.len()];
            }
            // r × len, column j holds the normals of draw j
            let g = standard_normal_matrix(len, r, &seed.child(c as u64)).transpose();
            let v = matmul(l, &g);
            let slice = v.as_slice();
            ps.iter()
                .map(|&p| (0..len).map(|j| norm_resolved(&slice[j * d..(j + 1) * d], p)).collect())
                .collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(b); ps.len()];
    for chunk in per_chunk {
        for (dst, src) in out.iter_mut().zip(chunk) {
            dst.extend(src);
        }
    }
    out
}

fn resolve_all(ps: &[LpExponent], d: usize) -> Result<Vec<f64>> {
    if ps.is_empty() {
        return Err(Error::Empty("exponent list"));
    }
    ps.iter().map(|p| p.resolve(d)).collect()
}

fn package(
    norms: Vec<Vec<f64>>,
    ps: &[LpExponent],
    engine: Engine,
    seed: &RngSeed,
) -> Result<Vec<EmpiricalDistribution>> {
    norms
        .into_iter()
        .zip(ps)
        .map(|(s, &p)| {
            EmpiricalDistribution::new(
                s,
                DistributionMeta {
                    engine,
                    p,
                    seed: seed.clone(),
                },
            )
        })
        .collect()
}

fn covariance_draws(
    s: &CovMatrix,
    ps: &[LpExponent],
    b: usize,
    rng: &RngSeed,
    engine: Engine,
) -> Result<Vec<EmpiricalDistribution>> {
    check_b(b)?;
    let resolved = resolve_all(ps, s.dim())?;
    let f = factor_of(s)?;
    package(gaussian_norms(&f.factor, &resolved, b, rng), ps, engine, rng)
}

/// Parametric bootstrap: `B` draws of `‖V‖_p` with `V ~ N(0, Σ̂)`.
pub fn gpb_draws(sigma_hat: &CovMatrix, p: LpExponent, b: usize, rng: &RngSeed) -> Result<EmpiricalDistribution> {
    Ok(gpb_draws_multi(sigma_hat, &[p], b, rng)?.remove(0))
}

/// [`gpb_draws`] for several exponents from one set of Gaussian draws.
pub fn gpb_draws_multi(
    sigma_hat: &CovMatrix,
    ps: &[LpExponent],
    b: usize,
    rng: &RngSeed,
) -> Result<Vec<EmpiricalDistribution>> {
    covariance_draws(sigma_hat, ps, b, rng, Engine::Gpb)
}

/// Gaussian proxy: the parametric engine run with the true covariance.
pub fn proxy_draws(sigma_true: &CovMatrix, p: LpExponent, b: usize, rng: &RngSeed) -> Result<EmpiricalDistribution> {
    Ok(proxy_draws_multi(sigma_true, &[p], b, rng)?.remove(0))
}

pub fn proxy_draws_multi(
    sigma_true: &CovMatrix,
    ps: &[LpExponent],
    b: usize,
    rng: &RngSeed,
) -> Result<Vec<EmpiricalDistribution>> {
    covariance_draws(sigma_true, ps, b, rng, Engine::Proxy)
}

/// Multiplier bootstrap: `B` draws of `‖n^{-1/2} Σ g_i (X_i − X̄)‖_p`
/// with fresh standard normal multipliers `g` for every draw.
pub fn gmb_draws(x: &DataMatrix, p: LpExponent, b: usize, rng: &RngSeed) -> Result<EmpiricalDistribution> {
    Ok(gmb_draws_multi(x, &[p], b, rng)?.remove(0))
}

pub fn gmb_draws_multi(
    x: &DataMatrix,
    ps: &[LpExponent],
    b: usize,
    rng: &RngSeed,
) -> Result<Vec<EmpiricalDistribution>> {
    check_b(b)?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { required: 2, actual: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data matrix"));
    }
    let resolved = resolve_all(ps, x.ncols())?;
    // d × n; column i is (X_i − X̄)/√n, so L g is one multiplier draw.
    let l = centered(x).transpose() / (n as f64).sqrt();
    package(gaussian_norms(&l, &resolved, b, rng), ps, Engine::Gmb, rng)
}

/// The `⌈α·B⌉`-th order statistic (1-based), i.e. the smallest sample `t`
/// with `F̂(t) ≥ α`.
pub fn empirical_quantile(dist: &EmpiricalDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(dist.samples[quantile_index(alpha, dist.len())])
}

/// Zero-based index of the `⌈α·B⌉`-th order statistic. A relative slack
/// keeps products such as `0.95 · 500` from rounding up past an integer.
pub(crate) fn quantile_index(alpha: f64, b: usize) -> usize {
    let x = alpha * b as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize;
    k.min(b) - 1
}

/// Two-sample Kolmogorov–Smirnov distance, exact by a merged sweep.
pub fn ks_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    ks_sorted(&a.samples, &b.samples)
}

/// KS distance between two ascending samples.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// KS distance between an ascending sample and a continuous CDF.
pub fn ks_against_cdf(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

//! Scalar distribution functions, PSD factorisation, multivariate normal
//! sampling (singular covariances allowed) and the Gaussian-copula data
//! generator with a permuted block rank-one covariance.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf;

use crate::covariance::{CovMatrix, DataMatrix, Provenance, PSD_REL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, matmul};
use crate::rng::RngSeed;

/// Relative eigenvalue cutoff used when factorising.
pub const DEFAULT_FACTOR_TOL: f64 = 1e-10;

/// Standard normal distribution function, through libm's `erfc` (absolute
/// error near machine precision).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function on `(0, 1)`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    check_unit_open(u)?;
    Ok(normal_quantile_unchecked(u))
}

fn normal_quantile_unchecked(u: f64) -> f64 {
    let mut z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * u);
    // Newton steps against the accurate distribution function, working in
    // the tail nearer to u so the residual keeps its relative precision.
    for _ in 0..2 {
        let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if !(dens > 0.0) || !z.is_finite() {
            break;
        }
        let resid = if u < 0.5 {
            normal_cdf(z) - u
        } else {
            (1.0 - u) - normal_cdf(-z)
        };
        z -= resid / dens;
    }
    z
}

fn check_unit_open(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::param("u", format!("must lie in (0, 1), got {u}")));
    }
    Ok(())
}

/// Marginal distributions of the copula generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginalKind {
    /// Uniform on `[−1, 1]` (light tails).
    UniformSym,
    /// Student's t with 4 degrees of freedom (heavy tails).
    StudentT4,
    StandardNormal,
}

impl MarginalKind {
    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        match self {
            MarginalKind::UniformSym => 1.0 / 3.0,
            MarginalKind::StudentT4 => 2.0,
            MarginalKind::StandardNormal => 1.0,
        }
    }

    /// Distribution function `F`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalKind::UniformSym => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            MarginalKind::StudentT4 => {
                let s = x * x / 4.0;
                let r = x / (1.0 + s).sqrt();
                0.5 + 0.375 * r * (1.0 - s / (3.0 * (1.0 + s)))
            }
            MarginalKind::StandardNormal => normal_cdf(x),
        }
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        match self {
            MarginalKind::UniformSym => 2.0 * u - 1.0,
            MarginalKind::StudentT4 => {
                let a = 4.0 * u * (1.0 - u);
                let sa = a.sqrt();
                let inner = ((sa.acos() / 3.0).cos() / sa - 1.0).max(0.0);
                (u - 0.5).signum() * 2.0 * inner.sqrt()
            }
            MarginalKind::StandardNormal => normal_quantile_unchecked(u),
        }
    }

    /// `F⁻¹(Φ(y))`, evaluated through the lower tail for accuracy.
    fn from_normal(&self, y: f64) -> f64 {
        match self {
            MarginalKind::StandardNormal => y,
            _ => {
                let u = normal_cdf(-y.abs()).max(f64::MIN_POSITIVE);
                -y.signum() * self.quantile_unchecked(u)
            }
        }
    }
}

impl fmt::Display for MarginalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginalKind::UniformSym => "uniform",
            MarginalKind::StudentT4 => "t4",
            MarginalKind::StandardNormal => "normal",
        })
    }
}

impl FromStr for MarginalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniform_sym" | "light" => Ok(MarginalKind::UniformSym),
            "t4" | "student_t4" | "heavy" => Ok(MarginalKind::StudentT4),
            "normal" | "gaussian" => Ok(MarginalKind::StandardNormal),
            _ => Err(Error::Config(format!("unknown marginal `{s}`"))),
        }
    }
}

/// Quantile function `F⁻¹(u)` of a marginal. The t₄ quantile uses its
/// closed form: with `a = 4u(1−u)`,
/// `sign(u−½) · 2 · √(cos(arccos(√a)/3)/√a − 1)`.
pub fn marginal_quantile(kind: MarginalKind, u: f64) -> Result<f64> {
    check_unit_open(u)?;
    Ok(kind.quantile_unchecked(u))
}

/// A `d × r` matrix `L` with `L Lᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub factor: DMatrix<f64>,
    pub rank: usize,
}

impl PsdFactor {
    pub(crate) fn from_parts(factor: DMatrix<f64>) -> Self {
        let rank = factor.ncols();
        Self { factor, rank }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        matmul(&self.factor, &self.factor.transpose())
    }
}

/// Eigen-based factor of a PSD matrix. Eigenvalues at or below
/// `tol · max|λ|` are dropped; the call fails if some eigenvalue is below
/// `−max(tol, 1e−8) · max|λ|`.
pub fn factorize_psd(s: &CovMatrix, tol: f64) -> Result<PsdFactor> {
    if tol == DEFAULT_FACTOR_TOL {
        return Ok((*factor_of(s)?).clone());
    }
    compute_factor(s, tol)
}

/// Cached default-tolerance factor of `s`.
pub(crate) fn factor_of(s: &CovMatrix) -> Result<Arc<PsdFactor>> {
    if let Some(f) = s.cached_factor() {
        return Ok(f);
    }
    let f = Arc::new(compute_factor(s, DEFAULT_FACTOR_TOL)?);
    s.store_factor(f.clone());
    Ok(f)
}

fn compute_factor(s: &CovMatrix, tol: f64) -> Result<PsdFactor> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::param("tol", format!("must be nonnegative, got {tol}")));
    }
    let d = s.dim();
    let e = linalg::sym_eigen(s.entries())?;
    let scale = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(PsdFactor::from_parts(DMatrix::zeros(d, 0)));
    }
    let min = e.values[0];
    if min < -tol.max(PSD_REL_TOL) * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let keep: Vec<usize> = (0..d).filter(|&i| e.values[i] > tol * scale).collect();
    let factor = DMatrix::from_fn(d, keep.len(), |i, j| {
        e.vectors[(i, keep[j])] * e.values[keep[j]].sqrt()
    });
    Ok(PsdFactor::from_parts(factor))
}

/// `count` i.i.d. rows from `N(0, L Lᵀ)`, generated as `L g` with
/// `g ~ N(0, I_r)`; the normals are drawn row by row from `rng`.
pub fn mvn_sample(f: &PsdFactor, count: usize, rng: &RngSeed) -> Result<DataMatrix> {
    if count == 0 {
        return Err(Error::param("count", "must be positive"));
    }
    let g = standard_normal_matrix(count, f.rank, rng);
    Ok(matmul(&g, &f.factor.transpose()))
}

/// `rows × cols` matrix of standard normals filled in row-major order.
pub(crate) fn standard_normal_matrix(rows: usize, cols: usize, seed: &RngSeed) -> DMatrix<f64> {
    let mut r = seed.rng();
    let mut g = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            g[(i, j)] = r.sample(StandardNormal);
        }
    }
    g
}

/// Block-diagonal covariance with rank-one blocks `Λ_jk = decay^{j+k−2}`,
/// rows and columns permuted by a uniform permutation drawn from
/// `perm_seed` (identity when `None`). The result has rank `d / block`.
pub fn build_block_covariance(
    d: usize,
    block: usize,
    decay: f64,
    perm_seed: Option<&RngSeed>,
) -> Result<CovMatrix> {
    if d == 0 || block == 0 {
        return Err(Error::param("d", "dimension and block size must be positive"));
    }
    if d % block != 0 {
        return Err(Error::param("block", format!("{block} does not divide d = {d}")));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::param("decay", format!("must lie in (0, 1), got {decay}")));
    }
    let mut perm: Vec<usize> = (0..d).collect();
    if let Some(seed) = perm_seed {
        perm.shuffle(&mut seed.rng());
    }
    let nblocks = d / block;
    let mut factor = DMatrix::zeros(d, nblocks);
    for b in 0..nblocks {
        for j in 0..block {
            factor[(perm[b * block + j], b)] = decay.powi(j as i32);
        }
    }
    let entries = matmul(&factor, &factor.transpose());
    let s = CovMatrix::certified_unchecked(entries, Provenance::BlockDesign { block, decay });
    s.store_factor(Arc::new(PsdFactor::from_parts(factor)));
    Ok(s)
}

/// Gaussian-copula sample `X_ij = F⁻¹(Φ(Y_ij))` with `Y_i ~ N(0, S)`.
///
/// With `standardize`, each coordinate of `Y` is divided by its standard
/// deviation first, so every column of `X` has marginal `F` exactly. The
/// output is centred by the mean of `F`.
pub fn copula_sample(
    s: &CovMatrix,
    kind: MarginalKind,
    n: usize,
    rng: &RngSeed,
    standardize: bool,
) -> Result<DataMatrix> {
    let scale = copula_scales(s, standardize)?;
    let f = factor_of(s)?;
    let mut x = mvn_sample(&f, n, rng)?;
    let mean = kind.mean();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let inv = 1.0 / scale[j];
        for v in col.iter_mut() {
            *v = kind.from_normal(*v * inv) - mean;
        }
    }
    Ok(x)
}

fn copula_scales(s: &CovMatrix, standardize: bool) -> Result<Vec<f64>> {
    let diag = s.diag();
    if standardize {
        diag.into_iter()
            .map(|v| {
                if v > 0.0 {
                    Ok(v.sqrt())
                } else {
                    Err(Error::param(
                        "covariance",
                        format!("standardized copula needs a positive diagonal, found {v}"),
                    ))
                }
            })
            .collect()
    } else {
        Ok(vec![1.0; diag.len()])
    }
}

const QUAD_HALF_WIDTH: f64 = 12.0;
const QUAD_STEPS: usize = 2400;
const QUAD2_HALF_WIDTH: f64 = 8.0;
const QUAD2_STEPS: usize = 240;

/// Covariance of the copula output `X`, by quadrature against the normal
/// density: one-dimensional for diagonal entries and for pairs with
/// `|corr(Y_j, Y_k)| = 1`, two-dimensional otherwise. Uncorrelated pairs are
/// exactly zero.
pub fn copula_covariance(s: &CovMatrix, kind: MarginalKind, standardize: bool) -> Result<CovMatrix> {
    let d = s.dim();
    let diag = s.diag();
    if diag.iter().any(|v| *v < 0.0) {
        return Err(Error::param("covariance", "negative diagonal entry"));
    }
    let sd: Vec<f64> = if standardize {
        copula_scales(s, true)?.iter().map(|_| 1.0).collect()
    } else {
        diag.iter().map(|v| v.sqrt()).collect()
    };
    if kind == MarginalKind::StudentT4 && !standardize && diag.iter().any(|v| *v >= 2.0) {
        return Err(Error::param(
            "covariance",
            "t4 copula without standardisation has infinite variance when Var(Y_j) ≥ 2",
        ));
    }
    let ysd: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();

    // Simpson nodes on a symmetric grid.
    let h = 2.0 * QUAD_HALF_WIDTH / QUAD_STEPS as f64;
    let nodes: Vec<f64> = (0..=QUAD_STEPS).map(|i| -QUAD_HALF_WIDTH + i as f64 * h).collect();
    let weights: Vec<f64> = (0..=QUAD_STEPS)
        .map(|i| {
            let w = if i == 0 || i == QUAD_STEPS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0 * (-0.5 * nodes[i] * nodes[i]).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .collect();
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; d];
    let values = |j: usize, cache: &mut Vec<Option<Vec<f64>>>| -> Vec<f64> {
        if cache[j].is_none() {
            cache[j] = Some(nodes.iter().map(|z| kind.from_normal(sd[j] * z)).collect());
        }
        cache[j].clone().unwrap()
    };

    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        if ysd[j] == 0.0 {
            continue;
        }
        let hj = values(j, &mut cache);
        out[(j, j)] = hj.iter().zip(&weights).map(|(v, w)| v * v * w).sum();
        for k in (j + 1)..d {
            let sjk = s.entries()[(j, k)];
            if sjk == 0.0 || ysd[k] == 0.0 {
                continue;
            }
            let rho = (sjk / (ysd[j] * ysd[k])).clamp(-1.0, 1.0);
            let c = if (1.0 - rho.abs()) < 1e-12 {
                let hk = values(k, &mut cache);
                let m = QUAD_STEPS;
                (0..=m)
                    .map(|i| {
                        let ik = if rho > 0.0 { i } else { m - i };
                        hj[i] * hk[ik] * weights[i]
                    })
                    .sum()
            } else {
                copula_pair_2d(kind, sd[j], sd[k], rho)
            };
            out[(j, k)] = c;
            out[(k, j)] = c;
        }
    }
    CovMatrix::new(out, Provenance::Supplied)?.certify()
}

fn copula_pair_2d(kind: MarginalKind, sj: f64, sk: f64, rho: f64) -> f64 {
    let m = QUAD2_STEPS;
    let h = 2.0 * QUAD2_HALF_WIDTH / m as f64;
    let w1 = |i: usize| -> f64 {
        if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let c = (1.0 - rho * rho).sqrt();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for a in 0..=m {
        let z1 = -QUAD2_HALF_WIDTH + a as f64 * h;
        let g1 = kind.from_normal(sj * z1);
        let mut inner = 0.0;
        for b in 0..=m {
            let z2 = -QUAD2_HALF_WIDTH + b as f64 * h;
            inner += w1(b) * phi(z2) * kind.from_normal(sk * (rho * z1 + c * z2));
        }
        total += w1(a) * phi(z1) * g1 * inner;
    }
    total * (h / 3.0) * (h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn normal_cdf_examples() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!(normal_cdf(8.0) > 1.0 - 1e-14);
        let oracle = 0.5 + simpson(|t| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(), 0.0, 1.959964, 20_000);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(1.959964) - oracle).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for i in 1..200 {
            let u = i as f64 / 200.0;
            let z = normal_quantile(u).unwrap();
            assert!((normal_cdf(z) - u).abs() < 1e-12);
        }
        assert!(normal_quantile(0.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(marginal_quantile(MarginalKind::UniformSym, 0.5).unwrap(), 0.0);
        assert_eq!(marginal_quantile(MarginalKind::StudentT4, 0.5).unwrap(), 0.0);
        assert!(marginal_quantile(MarginalKind::StudentT4, 1.0).is_err());
        // t4 CDF by integrating its density
        let q = marginal_quantile(MarginalKind::StudentT4, 0.95).unwrap();
        let dens = |t: f64| 0.375 * (1.0 + t * t / 4.0).powf(-2.5);
        let cdf = 0.5 + simpson(dens, 0.0, q, 4000);
        assert!((cdf - 0.95).abs() < 1e-8, "cdf = {cdf}");
        assert_relative_eq!(q, 2.131846786, epsilon = 1e-8);
    }

    #[test]
    fn quantiles_increase() {
        for kind in [MarginalKind::UniformSym, MarginalKind::StudentT4, MarginalKind::StandardNormal] {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..10_000 {
                let q = marginal_quantile(kind, i as f64 / 10_000.0).unwrap();
                assert!(q > prev, "{kind} not increasing at {i}");
                prev = q;
            }
        }
    }

    #[test]
    fn t4_cdf_inverts_quantile() {
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let q = marginal_quantile(MarginalKind::StudentT4, u).unwrap();
            assert!((MarginalKind::StudentT4.cdf(q) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_examples() {
        let f = factorize_psd(&CovMatrix::identity(3), DEFAULT_FACTOR_TOL).unwrap();
        assert_eq!(f.rank, 3);
        let r = f.reconstruct();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let block = DMatrix::from_fn(4, 4, |j, k| 0.8f64.powi((j + k) as i32));
        let s = CovMatrix::new(block, Provenance::Supplied).unwrap();
        assert_eq!(factorize_psd(&s, 1e-9).unwrap().rank, 1);
        let bad = CovMatrix::diagonal(&[1.0, -0.5]).unwrap();
        assert!(matches!(factorize_psd(&bad, 1e-9), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn zero_covariance_samples_zero() {
        let z = CovMatrix::new(DMatrix::zeros(3, 3), Provenance::Supplied).unwrap();
        let f = factorize_psd(&z, DEFAULT_FACTOR_TOL).unwrap();
        assert_eq!(f.rank, 0);
        let x = mvn_sample(&f, 5, &RngSeed::new(1)).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_covariance_examples() {
        let s = build_block_covariance(4, 2, 0.8, None).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.8, 0.0, 0.0, 0.8, 0.64, 0.0, 0.0, 0.0, 0.0, 1.0, 0.8, 0.0, 0.0, 0.8, 0.64],
        );
        for (a, b) in s.entries().iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let single = build_block_covariance(3, 3, 0.8, Some(&RngSeed::new(3))).unwrap();
        assert_eq!(factorize_psd(&single, 1e-9).unwrap().rank, 1);
        assert!(build_block_covariance(10, 3, 0.8, None).is_err());
        let a = build_block_covariance(20, 2, 0.8, Some(&RngSeed::new(5))).unwrap();
        let b = build_block_covariance(20, 2, 0.8, Some(&RngSeed::new(5))).unwrap();
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn uniform_copula_stays_in_range_and_keeps_ranks() {
        let s = build_block_covariance(6, 3, 0.8, Some(&RngSeed::new(2))).unwrap();
        let seed = RngSeed::new(11);
        let x = copula_sample(&s, MarginalKind::UniformSym, 200, &seed, false).unwrap();
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        // the Gaussian layer, drawn from the same stream
        let y = mvn_sample(&factor_of(&s).unwrap(), 200, &seed).unwrap();
        for j in 0..6 {
            let order = |col: Vec<f64>| {
                let mut idx: Vec<usize> = (0..col.len()).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
                idx
            };
            assert_eq!(
                order(x.column(j).iter().copied().collect()),
                order(y.column(j).iter().copied().collect())
            );
        }
    }

    #[test]
    fn standardized_zero_diagonal_is_rejected() {
        let s = CovMatrix::diagonal(&[1.0, 0.0]).unwrap();
        assert!(copula_sample(&s, MarginalKind::UniformSym, 3, &RngSeed::new(0), true).is_err());
        assert!(copula_sample(&s, MarginalKind::UniformSym, 3, &RngSeed::new(0), false).is_ok());
    }

    #[test]
    fn copula_covariance_matches_closed_forms() {
        // Uniform marginals: Cov = (2/π) arcsin(ρ/2).
        for rho in [0.0, 0.3, -0.6, 1.0] {
            let s = CovMatrix::new(
                DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
                Provenance::Supplied,
            )
            .unwrap();
            let c = copula_covariance(&s, MarginalKind::UniformSym, true).unwrap();
            let expect = 2.0 / std::f64::consts::PI * (rho / 2.0).asin();
            assert!((c.entries()[(0, 1)] - expect).abs() < 1e-7, "rho {rho}");
            assert!((c.entries()[(0, 0)] - 1.0 / 3.0).abs() < 1e-9);
        }
        let s = CovMatrix::identity(2);
        let c = copula_covariance(&s, MarginalKind::StudentT4, true).unwrap();
        assert!((c.entries()[(0, 0)] - 2.0).abs() < 1e-6);
        let c = copula_covariance(&CovMatrix::diagonal(&[2.0, 0.5]).unwrap(), MarginalKind::StandardNormal, false)
            .unwrap();
        assert!((c.entries()[(0, 0)] - 2.0).abs() < 1e-9);
    }
}

//! Covariance estimation: the sample covariance, entrywise regularisers
//! (hard/soft thresholding, correlation thresholding, banding), projection
//! onto the PSD cone, cross-validated choice of the correlation threshold,
//! and the diagnostic quantities used to describe an estimate.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, matmul};
use crate::lp::{norm_resolved, LpExponent};
use crate::rng::RngSeed;
use crate::sampling::PsdFactor;

/// Observations, one row per sample vector.
pub type DataMatrix = DMatrix<f64>;

/// Relative tolerance on negative eigenvalues for a matrix to count as PSD.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Default relative cutoff for the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// How an estimate was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Supplied by the caller (e.g. a known population covariance).
    Supplied,
    Sample,
    Threshold { lambda: f64, kind: ThresholdKind },
    CorrelationThreshold { lambda: f64 },
    Band { ell: usize },
    PsdProjected(Box<Provenance>),
    /// `M Σ Mᵀ` for a restriction map `M`.
    Conjugated(Box<Provenance>),
    BlockDesign { block: usize, decay: f64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Supplied => write!(f, "supplied"),
            Provenance::Sample => write!(f, "sample"),
            Provenance::Threshold { lambda, kind } => write!(f, "{kind}({lambda})"),
            Provenance::CorrelationThreshold { lambda } => write!(f, "corr-threshold({lambda})"),
            Provenance::Band { ell } => write!(f, "band({ell})"),
            Provenance::PsdProjected(inner) => write!(f, "psd[{inner}]"),
            Provenance::Conjugated(inner) => write!(f, "conj[{inner}]"),
            Provenance::BlockDesign { block, decay } => write!(f, "block({block},{decay})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    Hard,
    Soft,
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdKind::Hard => write!(f, "hard"),
            ThresholdKind::Soft => write!(f, "soft"),
        }
    }
}

/// Symmetric covariance matrix with a PSD flag, provenance and a cached
/// factorisation.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    psd_certified: bool,
    provenance: Provenance,
    factor: OnceLock<Arc<PsdFactor>>,
}

impl PartialEq for CovMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.psd_certified == other.psd_certified
            && self.provenance == other.provenance
    }
}

impl CovMatrix {
    /// Wraps a square matrix, symmetrising it. The result is not certified
    /// PSD; see [`CovMatrix::certify`].
    pub fn new(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::Empty("covariance matrix"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        Ok(Self::from_parts(symmetrize(entries), false, provenance))
    }

    fn from_parts(entries: DMatrix<f64>, psd_certified: bool, provenance: Provenance) -> Self {
        Self {
            entries,
            psd_certified,
            provenance,
            factor: OnceLock::new(),
        }
    }

    /// Wraps a matrix and certifies it PSD, failing if it is materially
    /// indefinite.
    pub fn new_psd(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let c = Self::new(entries, provenance)?.certify()?;
        if !c.psd_certified {
            let min = linalg::sym_eigenvalues(&c.entries)?[0];
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(c)
    }

    /// PSD by construction (e.g. `L Lᵀ`); skips the eigenvalue check.
    pub(crate) fn certified_unchecked(entries: DMatrix<f64>, provenance: Provenance) -> Self {
        Self::from_parts(symmetrize(entries), true, provenance)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_parts(DMatrix::identity(d, d), true, Provenance::Supplied)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let m = DMatrix::from_fn(d, d, |i, j| if i == j { diag[i] } else { 0.0 });
        let psd = diag.iter().all(|v| *v >= 0.0);
        let mut c = Self::new(m, Provenance::Supplied)?;
        c.psd_certified = psd;
        Ok(c)
    }

    /// Sets the PSD flag from an eigenvalue check.
    pub fn certify(mut self) -> Result<Self> {
        if !self.psd_certified {
            let ev = linalg::sym_eigenvalues(&self.entries)?;
            self.psd_certified = eigenvalues_are_psd(&ev);
        }
        Ok(self)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn psd_certified(&self) -> bool {
        self.psd_certified
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)]).collect()
    }

    /// `c · Σ` for `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::param("c", format!("scale must be nonnegative, got {c}")));
        }
        Ok(Self::from_parts(&self.entries * c, self.psd_certified, self.provenance.clone()))
    }

    /// `M Σ Mᵀ`; PSD is preserved.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: m.ncols(),
            });
        }
        let out = symmetrize(matmul(&matmul(m, &self.entries), &m.transpose()));
        Ok(Self::from_parts(
            out,
            self.psd_certified,
            Provenance::Conjugated(Box::new(self.provenance.clone())),
        ))
    }

    /// Cached factor for the default tolerance.
    pub(crate) fn cached_factor(&self) -> Option<Arc<PsdFactor>> {
        self.factor.get().cloned()
    }

    pub(crate) fn store_factor(&self, f: Arc<PsdFactor>) {
        let _ = self.factor.set(f);
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn eigenvalues_are_psd(ev: &[f64]) -> bool {
    let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ev.iter().all(|&v| v >= -PSD_REL_TOL * scale)
}

/// Sample covariance with divisor `n`: `n⁻¹ Σ (X_i − X̄)(X_i − X̄)ᵀ`.
pub fn sample_covariance(x: &DataMatrix) -> Result<CovMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { required: 2, actual: n });
    }
    if x.ncols() == 0 {
        return Err(Error::Empty("data matrix has no columns"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data matrix"));
    }
    let xc = centered(x);
    let s = matmul(&xc.transpose(), &xc) / n as f64;
    Ok(CovMatrix::from_parts(symmetrize(s), true, Provenance::Sample))
}

/// Column-centred copy of `x`.
pub(crate) fn centered(x: &DataMatrix) -> DataMatrix {
    let n = x.nrows() as f64;
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    xc
}

/// Entrywise thresholding of every entry (diagonal included).
///
/// Hard: `u·1{|u| > λ}`. Soft: `sign(u)(|u| − λ)₊`. Both satisfy
/// `|T(u)| ≤ |u|`, `T(u) = 0` for `|u| ≤ λ`, and `|T(u) − u| ≤ λ`.
pub fn threshold(m: &CovMatrix, lambda: f64, kind: ThresholdKind) -> Result<CovMatrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("must be nonnegative, got {lambda}")));
    }
    let out = m.entries.map(|u| threshold_scalar(u, lambda, kind));
    Ok(CovMatrix::from_parts(
        out,
        false,
        Provenance::Threshold { lambda, kind },
    ))
}

pub fn threshold_scalar(u: f64, lambda: f64, kind: ThresholdKind) -> f64 {
    match kind {
        ThresholdKind::Hard => {
            if u.abs() > lambda {
                u
            } else {
                0.0
            }
        }
        ThresholdKind::Soft => u.signum() * (u.abs() - lambda).max(0.0),
    }
}

/// Keeps `m_jk` iff `|m_jk| / √(m_jj m_kk) ≥ λ`; the diagonal always
/// survives. When nothing is removed the input (and its PSD flag) is
/// returned unchanged.
pub fn correlation_threshold(m: &CovMatrix, lambda: f64) -> Result<CovMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param("lambda", format!("must lie in [0, 1], got {lambda}")));
    }
    let sd = positive_sd(m)?;
    let d = m.dim();
    let mut out = m.entries.clone();
    let mut removed = false;
    for j in 0..d {
        for k in 0..d {
            if j != k && out[(j, k)].abs() / (sd[j] * sd[k]) < lambda {
                if out[(j, k)] != 0.0 {
                    removed = true;
                }
                out[(j, k)] = 0.0;
            }
        }
    }
    let certified = m.psd_certified && !removed;
    Ok(CovMatrix::from_parts(
        out,
        certified,
        Provenance::CorrelationThreshold { lambda },
    ))
}

fn positive_sd(m: &CovMatrix) -> Result<Vec<f64>> {
    m.diag()
        .into_iter()
        .map(|v| {
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(Error::param(
                    "covariance",
                    format!("correlation thresholding needs a positive diagonal, found {v}"),
                ))
            }
        })
        .collect()
}

/// Zeroes every entry with `|j − k| > ell`.
pub fn band(m: &CovMatrix, ell: usize) -> CovMatrix {
    let d = m.dim();
    let out = DMatrix::from_fn(d, d, |j, k| {
        if j.abs_diff(k) <= ell {
            m.entries[(j, k)]
        } else {
            0.0
        }
    });
    let unchanged = ell + 1 >= d;
    CovMatrix::from_parts(out, m.psd_certified && unchanged, Provenance::Band { ell })
}

/// Frobenius-nearest PSD matrix: eigenvalues of the symmetric part below
/// `tol · max(max|λ|, 1)` are set to zero.
///
/// Works block by block on the connected components of the nonzero
/// pattern, which is exact (the eigenvectors of a block-diagonal matrix
/// split along the blocks) and makes sparse estimates cheap. The factor of
/// the projection is cached on the result.
pub fn psd_project(m: &CovMatrix, tol: f64) -> Result<CovMatrix> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::param("tol", format!("must be nonnegative, got {tol}")));
    }
    let provenance = match &m.provenance {
        Provenance::PsdProjected(_) => m.provenance.clone(),
        other => Provenance::PsdProjected(Box::new(other.clone())),
    };
    if m.psd_certified && tol == 0.0 {
        let mut out = m.clone();
        out.provenance = provenance;
        return Ok(out);
    }
    let d = m.dim();
    let comps = linalg::nonzero_components(&m.entries);
    let mut pieces = Vec::with_capacity(comps.len());
    let mut max_abs = 0.0f64;
    for comp in &comps {
        let sub = DMatrix::from_fn(comp.len(), comp.len(), |a, b| m.entries[(comp[a], comp[b])]);
        let e = linalg::sym_eigen(&sub)?;
        max_abs = e.values.iter().fold(max_abs, |acc, v| acc.max(v.abs()));
        pieces.push(e);
    }
    let cut = tol * max_abs.max(1.0);

    let mut out = DMatrix::zeros(d, d);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (comp, e) in comps.iter().zip(&pieces) {
        let k = comp.len();
        let keep: Vec<usize> = (0..k).filter(|&i| e.values[i] >= cut && e.values[i] > 0.0).collect();
        if keep.is_empty() {
            continue;
        }
        // scaled eigenvectors: block of the factor
        let f = DMatrix::from_fn(k, keep.len(), |a, b| {
            e.vectors[(a, keep[b])] * e.values[keep[b]].sqrt()
        });
        let block = if k == 1 {
            DMatrix::from_element(1, 1, f[(0, 0)] * f[(0, 0)])
        } else {
            matmul(&f, &f.transpose())
        };
        for a in 0..k {
            for b in 0..k {
                out[(comp[a], comp[b])] = block[(a, b)];
            }
        }
        for b in 0..keep.len() {
            let mut col = vec![0.0; d];
            for a in 0..k {
                col[comp[a]] = f[(a, b)];
            }
            columns.push(col);
        }
    }
    let out = symmetrize(out);
    let result = CovMatrix::from_parts(out, true, provenance);
    let rank = columns.len();
    let factor = DMatrix::from_fn(d, rank, |i, j| columns[j][i]);
    result.store_factor(Arc::new(PsdFactor::from_parts(factor)));
    Ok(result)
}

/// Outcome of [`cv_select_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct CvSelection {
    pub lambda_hat: f64,
    /// Cross-validated risk per grid point, in grid order.
    pub risks: Vec<f64>,
}

/// `size` equally spaced points covering `[0, 1]` (both ends included).
pub fn default_cv_grid(size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..size).map(|i| i as f64 / (size - 1) as f64).collect(),
    }
}

/// Default number of random splits.
pub const DEFAULT_CV_FOLDS: usize = 10;
/// Default number of grid points.
pub const DEFAULT_CV_GRID: usize = 40;

/// Chooses the correlation-threshold level by repeated random splitting.
///
/// Each fold splits the rows at random into `⌈n/3⌉` and `n − ⌈n/3⌉`
/// observations; the risk at `λ` is the Frobenius distance between the
/// thresholded-and-projected covariance of the first part and the sample
/// covariance of the second, averaged over folds. Ties go to the smallest λ.
/// Fold `ν` draws its split from sub-stream `ν` of `seed`, so the result
/// does not depend on scheduling.
pub fn cv_select_lambda(
    x: &DataMatrix,
    grid: &[f64],
    folds: usize,
    seed: &RngSeed,
) -> Result<CvSelection> {
    let n = x.nrows();
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if folds == 0 {
        return Err(Error::param("folds", "must be positive"));
    }
    if n < 6 {
        return Err(Error::InsufficientData { required: 6, actual: n });
    }
    if grid.windows(2).any(|w| w[0] > w[1]) || grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::param("grid", "must be sorted and lie in [0, 1]"));
    }
    let n1 = n.div_ceil(3);

    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|nu| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut seed.child(nu as u64).rng());
            let x1 = x.select_rows(rows[..n1].iter());
            let x2 = x.select_rows(rows[n1..].iter());
            let s1 = sample_covariance(&x1)?;
            let s2 = sample_covariance(&x2)?;
            fold_risks(&s1, &s2, grid)
        })
        .collect::<Result<_>>()?;

    let mut risks = vec![0.0; grid.len()];
    for fold in &per_fold {
        for (r, v) in risks.iter_mut().zip(fold) {
            *r += v;
        }
    }
    for r in &mut risks {
        *r /= folds as f64;
    }
    let mut best = 0;
    for i in 1..grid.len() {
        if risks[i] < risks[best] {
            best = i;
        }
    }
    Ok(CvSelection {
        lambda_hat: grid[best],
        risks,
    })
}

fn fold_risks(s1: &CovMatrix, s2: &CovMatrix, grid: &[f64]) -> Result<Vec<f64>> {
    let sd = positive_sd(s1)?;
    let d = s1.dim();
    let corr_abs = DMatrix::from_fn(d, d, |j, k| s1.entries[(j, k)].abs() / (sd[j] * sd[k]));
    let mut out = Vec::with_capacity(grid.len());
    // Kept sets are nested in λ, so equal counts mean equal patterns.
    let mut last: Option<(usize, f64)> = None;
    for &lambda in grid {
        let kept = corr_abs.iter().filter(|c| **c >= lambda).count();
        if let Some((count, risk)) = last {
            if count == kept {
                out.push(risk);
                continue;
            }
        }
        let t = correlation_threshold(s1, lambda)?;
        let p = psd_project(&t, 0.0)?;
        let risk = (p.entries() - s2.entries()).norm();
        out.push(risk);
        last = Some((kept, risk));
    }
    Ok(out)
}

/// Rank and scale summaries of a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovDiagnostics {
    pub rank: usize,
    pub sigma_min_sq: f64,
    pub sigma_max_sq: f64,
    /// `tr(Σ) / ‖Σ‖_op`; zero for the zero matrix.
    pub effective_rank: f64,
}

/// Numerical rank (`#{λ > rank_tol · λ_max}`), extreme diagonal entries and
/// effective rank.
pub fn cov_diagnostics(s: &CovMatrix, rank_tol: f64) -> Result<CovDiagnostics> {
    let ev = linalg::sym_eigenvalues(&s.entries)?;
    let op = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lmax = ev.last().copied().unwrap_or(0.0);
    let rank = if lmax > 0.0 {
        ev.iter().filter(|&&v| v > rank_tol * lmax).count()
    } else {
        0
    };
    let diag = s.diag();
    let sigma_min_sq = diag.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let sigma_max_sq = diag.iter().copied().fold(0.0, f64::max);
    let trace: f64 = diag.iter().sum();
    let effective_rank = if op > 0.0 { trace / op } else { 0.0 };
    Ok(CovDiagnostics {
        rank,
        sigma_min_sq,
        sigma_max_sq,
        effective_rank,
    })
}

/// Operator-norm and vectorised ℓp errors of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovError {
    pub delta_op: f64,
    pub delta_p: Vec<(LpExponent, f64)>,
}

impl CovError {
    pub fn delta(&self, p: LpExponent) -> Option<f64> {
        self.delta_p.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

/// `Δ_op = ‖Σ̂ − Σ‖_op` and `Δ_p = ‖vec(Σ̂ − Σ)‖_p` for each requested `p`.
///
/// `LogDim` resolves against the matrix dimension `d`, the same exponent that
/// is applied to vectors in `ℝ^d`.
pub fn cov_error(est: &CovMatrix, truth: &CovMatrix, ps: &[LpExponent]) -> Result<CovError> {
    if est.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            actual: est.dim(),
        });
    }
    let diff = est.entries() - truth.entries();
    let ev = linalg::sym_eigenvalues(&diff)?;
    let delta_op = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let delta_p = ps
        .iter()
        .map(|&p| Ok((p, norm_resolved(diff.as_slice(), p.resolve(est.dim())?))))
        .collect::<Result<_>>()?;
    Ok(CovError { delta_op, delta_p })
}

/// Covariance estimators available to the bootstrap and the tests.
#[derive(Debug, Clone, PartialEq)]
pub enum CovEstimator {
    /// Sample covariance.
    Naive,
    /// Hard thresholding at a fixed level, then PSD projection.
    HardThreshold(f64),
    /// Correlation thresholding at a cross-validated level, then PSD projection.
    CorrelationCv { folds: usize, grid_size: usize },
    /// Banding, then PSD projection.
    Band(usize),
}

impl CovEstimator {
    pub fn correlation_cv_default() -> Self {
        CovEstimator::CorrelationCv {
            folds: DEFAULT_CV_FOLDS,
            grid_size: DEFAULT_CV_GRID,
        }
    }

    /// PSD estimate from data; `seed` drives the cross-validation splits.
    pub fn estimate(&self, x: &DataMatrix, seed: &RngSeed) -> Result<CovMatrix> {
        let s = sample_covariance(x)?;
        match *self {
            CovEstimator::Naive => Ok(s),
            CovEstimator::HardThreshold(lambda) => {
                psd_project(&threshold(&s, lambda, ThresholdKind::Hard)?, 0.0)
            }
            CovEstimator::CorrelationCv { folds, grid_size } => {
                let sel = cv_select_lambda(x, &default_cv_grid(grid_size), folds, seed)?;
                psd_project(&correlation_threshold(&s, sel.lambda_hat)?, 0.0)
            }
            CovEstimator::Band(ell) => psd_project(&band(&s, ell), 0.0),
        }
    }
}

impl fmt::Display for CovEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovEstimator::Naive => write!(f, "naive"),
            CovEstimator::HardThreshold(l) => write!(f, "hard:{l}"),
            CovEstimator::CorrelationCv { folds, grid_size } => {
                if *folds == DEFAULT_CV_FOLDS && *grid_size == DEFAULT_CV_GRID {
                    write!(f, "corr-cv")
                } else {
                    write!(f, "corr-cv:{folds}:{grid_size}")
                }
            }
            CovEstimator::Band(l) => write!(f, "band:{l}"),
        }
    }
}

impl std::str::FromStr for CovEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let mut parts = t.split(':');
        let head = parts.next().unwrap_or("");
        let bad = || Error::Config(format!("unknown covariance estimator `{s}`"));
        let num = |v: Option<&str>| -> Result<f64> {
            v.ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())
        };
        let est = match head {
            "naive" | "sample" => CovEstimator::Naive,
            "hard" => CovEstimator::HardThreshold(num(parts.next())?),
            "band" => {
                let l = num(parts.next())?;
                if l < 0.0 || l.fract() != 0.0 {
                    return Err(bad());
                }
                CovEstimator::Band(l as usize)
            }
            "corr-cv" | "thresholded" | "cv" => {
                let folds = parts.next().map(|v| v.parse::<usize>().map_err(|_| bad())).transpose()?;
                let grid = parts.next().map(|v| v.parse::<usize>().map_err(|_| bad())).transpose()?;
                CovEstimator::CorrelationCv {
                    folds: folds.unwrap_or(DEFAULT_CV_FOLDS),
                    grid_size: grid.unwrap_or(DEFAULT_CV_GRID),
                }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cov(rows: usize, data: &[f64]) -> CovMatrix {
        CovMatrix::new(DMatrix::from_row_slice(rows, rows, data), Provenance::Supplied).unwrap()
    }

    #[test]
    fn sample_covariance_examples() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let s = sample_covariance(&x).unwrap();
        assert!(s.entries().iter().all(|v| *v == 0.0));
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let s = sample_covariance(&x).unwrap();
        assert_eq!(s.entries(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(s.psd_certified());
        assert!(sample_covariance(&DMatrix::zeros(1, 3)).is_err());
        let mut bad = DMatrix::zeros(3, 2);
        bad[(1, 1)] = f64::NAN;
        assert!(sample_covariance(&bad).is_err());
    }

    #[test]
    fn threshold_examples() {
        let m = cov(2, &[1.0, 0.05, 0.05, 0.5]);
        let h0 = threshold(&m, 0.0, ThresholdKind::Hard).unwrap();
        assert_eq!(h0.entries(), m.entries());
        let h = threshold(&m, 0.1, ThresholdKind::Hard).unwrap();
        assert_eq!(h.entries()[(0, 1)], 0.0);
        assert_eq!(h.entries()[(1, 1)], 0.5);
        let s = threshold(&m, 0.1, ThresholdKind::Soft).unwrap();
        assert_relative_eq!(s.entries()[(1, 1)], 0.4);
        assert!(!s.psd_certified());
        assert!(threshold(&m, -1.0, ThresholdKind::Hard).is_err());
    }

    #[test]
    fn threshold_operator_properties() {
        for kind in [ThresholdKind::Hard, ThresholdKind::Soft] {
            for lambda in [0.0, 0.1, 0.7] {
                for i in -40..=40 {
                    let u = i as f64 / 20.0;
                    let t = threshold_scalar(u, lambda, kind);
                    assert!(t.abs() <= u.abs());
                    if u.abs() <= lambda {
                        assert_eq!(t, 0.0);
                    }
                    assert!((t - u).abs() <= lambda + 1e-15);
                }
            }
        }
    }

    #[test]
    fn correlation_threshold_examples() {
        let m = cov(2, &[1.0, 0.3, 0.3, 4.0]);
        let t = correlation_threshold(&m, 0.2).unwrap();
        assert_eq!(t.entries()[(0, 1)], 0.0);
        assert_eq!(t.entries()[(1, 1)], 4.0);
        let t0 = correlation_threshold(&m, 0.0).unwrap();
        assert_eq!(t0.entries(), m.entries());
        let t1 = correlation_threshold(&m, 1.0).unwrap();
        assert_eq!(t1.entries(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert!(correlation_threshold(&m, 1.5).is_err());
        assert!(correlation_threshold(&cov(2, &[0.0, 0.0, 0.0, 1.0]), 0.5).is_err());
    }

    #[test]
    fn band_examples() {
        let m = cov(3, &[3.0, 1.0, 0.5, 1.0, 3.0, 1.0, 0.5, 1.0, 3.0]);
        assert_eq!(band(&m, 0).entries(), &DMatrix::from_diagonal_element(3, 3, 3.0));
        assert_eq!(band(&m, 2).entries(), m.entries());
        let b1 = band(&m, 1);
        assert_eq!(b1.entries()[(0, 2)], 0.0);
        assert_eq!(b1.entries()[(0, 1)], 1.0);
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        let p = psd_project(&cov(2, &[1.0, 0.0, 0.0, -1.0]), 0.0).unwrap();
        assert_relative_eq!(p.entries()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.entries()[(1, 1)], 0.0, epsilon = 1e-12);
        assert!(p.psd_certified());
        let psd = cov(2, &[2.0, 1.0, 1.0, 2.0]);
        let q = psd_project(&psd, 0.0).unwrap();
        for (a, b) in q.entries().iter().zip(psd.entries().iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn diagnostics_examples() {
        let i = CovMatrix::identity(4);
        let dg = cov_diagnostics(&i, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(dg.rank, 4);
        assert_eq!((dg.sigma_min_sq, dg.sigma_max_sq), (1.0, 1.0));
        assert_relative_eq!(dg.effective_rank, 4.0, max_relative = 1e-12);
        let dg = cov_diagnostics(&CovMatrix::diagonal(&[4.0, 1.0]).unwrap(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!((dg.sigma_min_sq, dg.sigma_max_sq), (1.0, 4.0));
        assert_relative_eq!(dg.effective_rank, 1.25, max_relative = 1e-12);
        let b = 5;
        let block = DMatrix::from_fn(b, b, |j, k| 0.8f64.powi((j + k) as i32));
        let dg = cov_diagnostics(&CovMatrix::new(block, Provenance::Supplied).unwrap(), DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(dg.rank, 1);
    }

    #[test]
    fn cov_error_examples() {
        let truth = CovMatrix::identity(2);
        let e = cov_error(&truth, &truth, &[LpExponent::Finite(2.0)]).unwrap();
        assert_eq!(e.delta_op, 0.0);
        assert_eq!(e.delta(LpExponent::Finite(2.0)), Some(0.0));
        let est = CovMatrix::diagonal(&[4.0, -3.0]).unwrap();
        let e = cov_error(&est, &truth, &[LpExponent::Finite(2.0), LpExponent::Infinity]).unwrap();
        assert_relative_eq!(e.delta_op, 4.0, epsilon = 1e-12);
        assert_relative_eq!(e.delta(LpExponent::Finite(2.0)).unwrap(), 5.0, epsilon = 1e-12);
        assert!(cov_error(&CovMatrix::identity(3), &truth, &[]).is_err());
    }

    #[test]
    fn cv_singleton_grid_and_determinism() {
        let x = DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0 + j as f64 * 0.1);
        let sel = cv_select_lambda(&x, &[0.0], 3, &RngSeed::new(1)).unwrap();
        assert_eq!(sel.lambda_hat, 0.0);
        let grid = default_cv_grid(40);
        let a = cv_select_lambda(&x, &grid, 4, &RngSeed::new(9)).unwrap();
        let b = cv_select_lambda(&x, &grid, 4, &RngSeed::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(cv_select_lambda(&x.rows(0, 5).into_owned(), &grid, 2, &RngSeed::new(1)).is_err());
        assert!(cv_select_lambda(&x, &[], 2, &RngSeed::new(1)).is_err());
    }

    #[test]
    fn default_grid_spacing() {
        let g = default_cv_grid(40);
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[39], 1.0);
    }

    #[test]
    fn estimator_labels_parse() {
        for e in [
            CovEstimator::Naive,
            CovEstimator::HardThreshold(0.25),
            CovEstimator::correlation_cv_default(),
            CovEstimator::CorrelationCv { folds: 3, grid_size: 7 },
            CovEstimator::Band(2),
        ] {
            assert_eq!(e.to_string().parse::<CovEstimator>().unwrap(), e);
        }
        assert!("bogus".parse::<CovEstimator>().is_err());
    }
}

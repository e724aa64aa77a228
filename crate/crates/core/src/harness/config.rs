//! Experiment configuration: a flat `key = value` text format with presets.

use std::fmt;
use std::str::FromStr;

use crate::covariance::CovEstimator;
use crate::error::{Error, Result};
use crate::lp::LpExponent;
use crate::sampling::MarginalKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ks,
    Coverage,
    PowerDense,
    PowerSparse,
    Probe,
}

impl ExperimentKind {
    pub fn is_power(&self) -> bool {
        matches!(self, ExperimentKind::PowerDense | ExperimentKind::PowerSparse)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Ks => "ks",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::PowerDense => "power-dense",
            ExperimentKind::PowerSparse => "power-sparse",
            ExperimentKind::Probe => "probe",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ks" => Ok(ExperimentKind::Ks),
            "coverage" => Ok(ExperimentKind::Coverage),
            "power-dense" => Ok(ExperimentKind::PowerDense),
            "power-sparse" => Ok(ExperimentKind::PowerSparse),
            "probe" => Ok(ExperimentKind::Probe),
            _ => Err(Error::Config(format!("unknown experiment kind `{s}`"))),
        }
    }
}

/// A distribution estimate compared in the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Gaussian proxy with the true covariance of the data.
    Proxy,
    /// Multiplier bootstrap.
    Gmb,
    /// Parametric bootstrap with the given covariance estimator.
    Gpb(CovEstimator),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Proxy => write!(f, "proxy"),
            Method::Gmb => write!(f, "gmb"),
            Method::Gpb(e) => write!(f, "gpb-{e}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `proxy`, `gmb`, `gpb-<estimator>` or a bare estimator name.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "proxy" => Ok(Method::Proxy),
            "gmb" => Ok(Method::Gmb),
            _ => {
                let est = t.strip_prefix("gpb-").unwrap_or(t);
                Ok(Method::Gpb(est.parse()?))
            }
        }
    }
}

/// All settings of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub d: usize,
    pub marginal: MarginalKind,
    pub p_list: Vec<LpExponent>,
    pub estimators: Vec<Method>,
    pub mc_reps: usize,
    pub b: usize,
    pub truth_reps: usize,
    pub alpha: f64,
    pub delta_grid: Vec<f64>,
    pub seed: u64,
    pub output_path: Option<String>,
    /// Block size of the covariance design.
    pub block: usize,
    pub decay: f64,
    /// Divide the latent Gaussian coordinates by their standard deviations.
    pub standardize: bool,
    /// Probe settings.
    pub n_mc: usize,
    pub probe_c: f64,
    pub probe_dims: Vec<usize>,
    pub probe_eps: Vec<f64>,
    pub probe_ps: Vec<LpExponent>,
}

/// Block size used by default: `d/100` when that is a divisor of `d`,
/// otherwise 1.
pub fn default_block(d: usize) -> usize {
    let b = d / 100;
    if b >= 1 && d % b == 0 {
        b
    } else {
        1
    }
}

/// Number of nonzero coordinates of the sparse alternative,
/// `2⌈√(log d)/2⌉`.
pub fn sparse_support(d: usize) -> usize {
    (2.0 * ((d as f64).ln().sqrt() / 2.0).ceil()) as usize
}

/// Number of points in the default signal grids.
pub const DELTA_GRID_POINTS: usize = 13;

/// Default signal grid: `[0, 12/√(nd)]` for dense alternatives and
/// `[0, 2√(log d / n)]` for sparse ones, 13 equally spaced points.
pub fn default_delta_grid(kind: ExperimentKind, n: usize, d: usize) -> Vec<f64> {
    let (nf, df) = (n as f64, d as f64);
    let top = match kind {
        ExperimentKind::PowerDense => 12.0 / (nf * df).sqrt(),
        ExperimentKind::PowerSparse => 2.0 * (df.ln() / nf).sqrt(),
        _ => return Vec::new(),
    };
    let m = DELTA_GRID_POINTS - 1;
    (0..=m).map(|i| top * i as f64 / m as f64).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults: `n = 200`, `d = 200`, 500 replicates, `B = 500`,
    /// 2000 truth draws, light tails.
    pub fn desk(kind: ExperimentKind) -> Self {
        let (n, d) = (200, 200);
        let estimators = match kind {
            ExperimentKind::Ks => vec![
                Method::Proxy,
                Method::Gmb,
                Method::Gpb(CovEstimator::Naive),
                Method::Gpb(CovEstimator::correlation_cv_default()),
            ],
            ExperimentKind::Coverage => vec![
                Method::Proxy,
                Method::Gpb(CovEstimator::correlation_cv_default()),
            ],
            _ => vec![Method::Gpb(CovEstimator::correlation_cv_default())],
        };
        Self {
            kind,
            n,
            d,
            marginal: MarginalKind::UniformSym,
            p_list: LpExponent::standard_set(),
            estimators,
            mc_reps: 500,
            b: 500,
            truth_reps: 2000,
            alpha: 0.05,
            delta_grid: default_delta_grid(kind, n, d),
            seed: 42,
            output_path: None,
            block: default_block(d),
            decay: 0.8,
            standardize: true,
            n_mc: 10_000,
            probe_c: crate::diagnostics::DEFAULT_PROBE_C,
            probe_dims: vec![50, 200],
            probe_eps: vec![0.05, 0.1],
            probe_ps: vec![
                LpExponent::Finite(1.0),
                LpExponent::Finite(2.0),
                LpExponent::Finite(4.0),
            ],
        }
    }

    /// The original study's sizes: `d = 1000`, 1000 replicates, `B = 1000`,
    /// 5000 truth draws (`d = 400` for the power curves).
    pub fn paper_scale(kind: ExperimentKind) -> Self {
        let mut c = Self::desk(kind);
        c.d = if kind.is_power() { 400 } else { 1000 };
        c.mc_reps = 1000;
        c.b = 1000;
        c.truth_reps = 5000;
        c.block = default_block(c.d);
        c.delta_grid = default_delta_grid(kind, c.n, c.d);
        c
    }

    pub fn preset(name: &str, kind: ExperimentKind) -> Result<Self> {
        match name.trim() {
            "desk" => Ok(Self::desk(kind)),
            "paper-scale" | "paper" => Ok(Self::paper_scale(kind)),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// Parses `key = value` lines. `#` starts a comment; lists are comma
    /// separated. `kind` is required; `preset` (default `desk`) chooses the
    /// starting values that the remaining keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim().to_string();
            if pairs.iter().any(|(_, existing, _)| *existing == key) {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
            pairs.push((i + 1, key, v.trim().to_string()));
        }
        let find = |name: &str| pairs.iter().find(|(_, k, _)| k == name).map(|(_, _, v)| v.clone());
        let kind: ExperimentKind = find("kind")
            .ok_or_else(|| Error::Config("missing required key `kind`".into()))?
            .parse()?;
        let mut cfg = Self::preset(find("preset").as_deref().unwrap_or("desk"), kind)?;
        let mut grid_set = false;
        let mut block_set = false;
        for (line, key, value) in &pairs {
            let ctx = |e: Error| match e {
                Error::Config(reason) | Error::InvalidExponent(reason) => Error::Parse { line: *line, reason },
                other => other,
            };
            match key.as_str() {
                "kind" | "preset" => {}
                "n" => cfg.n = parse_num(value).map_err(ctx)?,
                "d" => cfg.d = parse_num(value).map_err(ctx)?,
                "marginal" => cfg.marginal = value.parse().map_err(ctx)?,
                "p_list" => cfg.p_list = parse_list(value).map_err(ctx)?,
                "estimators" => cfg.estimators = parse_list(value).map_err(ctx)?,
                "mc_reps" => cfg.mc_reps = parse_num(value).map_err(ctx)?,
                "B" | "b" => cfg.b = parse_num(value).map_err(ctx)?,
                "truth_reps" => cfg.truth_reps = parse_num(value).map_err(ctx)?,
                "alpha" => cfg.alpha = parse_num(value).map_err(ctx)?,
                "delta_grid" => {
                    if value != "auto" {
                        cfg.delta_grid = parse_list(value).map_err(ctx)?;
                        grid_set = true;
                    }
                }
                "seed" => cfg.seed = parse_num(value).map_err(ctx)?,
                "output_path" => cfg.output_path = Some(value.clone()),
                "block" => {
                    cfg.block = parse_num(value).map_err(ctx)?;
                    block_set = true;
                }
                "decay" => cfg.decay = parse_num(value).map_err(ctx)?,
                "standardize" => cfg.standardize = parse_num(value).map_err(ctx)?,
                "n_mc" => cfg.n_mc = parse_num(value).map_err(ctx)?,
                "probe_c" => cfg.probe_c = parse_num(value).map_err(ctx)?,
                "probe_dims" => cfg.probe_dims = parse_list(value).map_err(ctx)?,
                "probe_eps" => cfg.probe_eps = parse_list(value).map_err(ctx)?,
                "probe_ps" => cfg.probe_ps = parse_list(value).map_err(ctx)?,
                other => {
                    return Err(Error::Parse {
                        line: *line,
                        reason: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        if !grid_set {
            cfg.delta_grid = default_delta_grid(kind, cfg.n, cfg.d);
        }
        if !block_set {
            cfg.block = default_block(cfg.d);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 6 {
            return bad(format!("n must be at least 6, got {}", self.n));
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.block == 0 || self.d % self.block != 0 {
            return bad(format!("block {} must divide d = {}", self.block, self.d));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.p_list.is_empty() {
            return bad("p_list is empty".into());
        }
        if self.p_list.iter().any(|p| p.resolve(self.d).is_err()) {
            return bad(format!("p_list contains an exponent that is invalid for d = {}", self.d));
        }
        if self.estimators.is_empty() && self.kind != ExperimentKind::Probe {
            return bad("estimators is empty".into());
        }
        if self.mc_reps == 0 || self.b == 0 || self.truth_reps == 0 {
            return bad("mc_reps, B and truth_reps must be positive".into());
        }
        if self.b > crate::bootstrap::MAX_DRAWS {
            return bad(format!("B must not exceed {}", crate::bootstrap::MAX_DRAWS));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.kind.is_power() {
            if self.delta_grid.is_empty() {
                return bad("delta_grid must be nonempty for power experiments".into());
            }
            if self.delta_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return bad("delta_grid entries must be nonnegative".into());
            }
            if !self.estimators.iter().any(|m| matches!(m, Method::Gpb(_))) {
                return bad("power experiments need a gpb estimator".into());
            }
        }
        if self.kind == ExperimentKind::Probe {
            if self.n_mc < crate::diagnostics::MIN_PROBE_DRAWS {
                return bad(format!("n_mc must be at least {}", crate::diagnostics::MIN_PROBE_DRAWS));
            }
            if self.probe_dims.iter().any(|&d| d < 3) || self.probe_dims.is_empty() {
                return bad("probe_dims must be nonempty with every entry at least 3".into());
            }
            if self.probe_eps.is_empty() || self.probe_eps.iter().any(|e| !(*e > 0.0)) {
                return bad("probe_eps must be nonempty and positive".into());
            }
            if !(self.probe_c > 0.0) {
                return bad("probe_c must be positive".into());
            }
        }
        Ok(())
    }

    /// Serialises to the `key = value` format accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("kind", self.kind.to_string());
        kv("n", self.n.to_string());
        kv("d", self.d.to_string());
        kv("marginal", self.marginal.to_string());
        kv("p_list", join(self.p_list.iter().map(|p| p.label()).collect()));
        kv("estimators", join(self.estimators.iter().map(|m| m.to_string()).collect()));
        kv("mc_reps", self.mc_reps.to_string());
        kv("B", self.b.to_string());
        kv("truth_reps", self.truth_reps.to_string());
        kv("alpha", self.alpha.to_string());
        if !self.delta_grid.is_empty() {
            kv("delta_grid", join(self.delta_grid.iter().map(|v| v.to_string()).collect()));
        }
        kv("seed", self.seed.to_string());
        if let Some(p) = &self.output_path {
            kv("output_path", p.clone());
        }
        kv("block", self.block.to_string());
        kv("decay", self.decay.to_string());
        kv("standardize", self.standardize.to_string());
        kv("n_mc", self.n_mc.to_string());
        kv("probe_c", self.probe_c.to_string());
        kv("probe_dims", join(self.probe_dims.iter().map(|v| v.to_string()).collect()));
        kv("probe_eps", join(self.probe_eps.iter().map(|v| v.to_string()).collect()));
        kv("probe_ps", join(self.probe_ps.iter().map(|p| p.label()).collect()));
        s
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("`{s}`: {e}"))))
        .collect()
}

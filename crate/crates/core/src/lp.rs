//! ℓp-norms for every exponent regime, their smooth surrogates, and the
//! closed-form partial derivatives of `x ↦ ‖x‖_p` on the positive orthant.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Exponent of an ℓp-norm.
///
/// `LogDim` is the dimension-coupled exponent `ln d`; it is resolved against
/// the dimension of the vector it is applied to and requires `d ≥ 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpExponent {
    Finite(f64),
    LogDim,
    Infinity,
}

impl LpExponent {
    /// Resolves the exponent to a number for dimension `d` (`f64::INFINITY`
    /// for the maximum norm).
    pub fn resolve(&self, d: usize) -> Result<f64> {
        match *self {
            LpExponent::Finite(p) => {
                if !(p >= 1.0) || !p.is_finite() {
                    return Err(Error::InvalidExponent(format!("p = {p} (need 1 ≤ p < ∞)")));
                }
                Ok(p)
            }
            LpExponent::LogDim => {
                if d < 3 {
                    return Err(Error::InvalidExponent(format!(
                        "p = log d needs d ≥ 3, got d = {d}"
                    )));
                }
                Ok((d as f64).ln())
            }
            LpExponent::Infinity => Ok(f64::INFINITY),
        }
    }

    /// Stable label used in CSV output: `1`, `2.5`, `logd`, `inf`.
    pub fn label(&self) -> String {
        match self {
            LpExponent::Finite(p) => format!("{p}"),
            LpExponent::LogDim => "logd".to_string(),
            LpExponent::Infinity => "inf".to_string(),
        }
    }

    /// True when the exponent is at least `log d` (the max-norm-like regime).
    pub fn is_large(&self, d: usize) -> bool {
        match *self {
            LpExponent::Finite(p) => d >= 3 && p >= (d as f64).ln(),
            _ => true,
        }
    }

    /// The default exponent set `{1, 2, log d, ∞}`.
    pub fn standard_set() -> Vec<LpExponent> {
        vec![
            LpExponent::Finite(1.0),
            LpExponent::Finite(2.0),
            LpExponent::LogDim,
            LpExponent::Infinity,
        ]
    }
}

impl fmt::Display for LpExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for LpExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "logd" | "log" | "log_d" | "ln_d" => Ok(LpExponent::LogDim),
            "inf" | "infinity" | "max" => Ok(LpExponent::Infinity),
            _ => {
                let p: f64 = t
                    .parse()
                    .map_err(|_| Error::InvalidExponent(format!("cannot parse `{s}`")))?;
                if !(p >= 1.0) || !p.is_finite() {
                    return Err(Error::InvalidExponent(format!("p = {p} (need 1 ≤ p < ∞)")));
                }
                Ok(LpExponent::Finite(p))
            }
        }
    }
}

fn check_vector(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vector"));
    }
    Ok(())
}

/// `‖x‖_p` with the dimension context taken from `x.len()`.
pub fn lp_norm(x: &[f64], p: LpExponent) -> Result<f64> {
    lp_norm_in_dim(x, p, x.len())
}

/// `‖x‖_p` where a `LogDim` exponent is resolved against `d_context`.
pub fn lp_norm_in_dim(x: &[f64], p: LpExponent, d_context: usize) -> Result<f64> {
    check_vector(x)?;
    let p = p.resolve(d_context)?;
    Ok(norm_resolved(x, p))
}

/// Max-factored ℓp-norm for an already validated exponent `p ∈ [1, ∞]`.
pub(crate) fn norm_resolved(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || p == f64::INFINITY {
        return m;
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    let inv = 1.0 / m;
    if p == 2.0 {
        let s: f64 = x.iter().map(|v| (v * inv) * (v * inv)).sum();
        return m * s.sqrt();
    }
    let s: f64 = x.iter().map(|v| (v.abs() * inv).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// Smooth surrogate `M_{p,η}(x) = (η^p + Σ|x_j|^p)^{1/p}` for even `p`.
///
/// Satisfies `‖x‖_p ≤ M_{p,η}(x) ≤ ‖x‖_p + η` and `M_{p,η}(x) ≥ η`.
pub fn smooth_norm(x: &[f64], p: u32, eta: f64) -> Result<f64> {
    check_vector(x)?;
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidExponent(format!(
            "smooth norm needs an even integer p ≥ 2, got {p}"
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param("eta", format!("must be positive, got {eta}")));
    }
    let m = x.iter().fold(eta, |acc, v| acc.max(v.abs()));
    let pf = p as f64;
    let s = (eta / m).powi(p as i32) + x.iter().map(|v| (v.abs() / m).powi(p as i32)).sum::<f64>();
    Ok(m * s.powf(1.0 / pf))
}

/// Log-sum-exp smooth maximum of `|x|`:
/// `β⁻¹ log Σ_k (e^{β x_k} + e^{-β x_k})`.
///
/// Satisfies `‖x‖_∞ ≤ F_β(x) ≤ ‖x‖_∞ + β⁻¹ log(2d)`. Evaluated with the
/// largest exponent factored out, so it never overflows.
pub fn smooth_max(x: &[f64], beta: f64) -> Result<f64> {
    check_vector(x)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    Ok(smooth_max_unchecked(x, beta, 1.0))
}

/// The smooth maximum applied to the rescaled vector `x · d^{-1/p}`, i.e.
/// `β⁻¹ log Σ_k (e^{β x_k d^{-1/p}} + e^{-β x_k d^{-1/p}})`.
///
/// For `p = ∞` this is [`smooth_max`]. For finite `p ≥ log d` the rescaling
/// shrinks the argument by at most `e`, so the value lies in
/// `[d^{-1/p}‖x‖_∞, d^{-1/p}‖x‖_∞ + β⁻¹ log(2d)]`.
pub fn smooth_max_scaled(x: &[f64], beta: f64, p: LpExponent) -> Result<f64> {
    check_vector(x)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    let pr = p.resolve(x.len())?;
    let scale = if pr.is_infinite() {
        1.0
    } else {
        (x.len() as f64).powf(-1.0 / pr)
    };
    Ok(smooth_max_unchecked(x, beta, scale))
}

fn smooth_max_unchecked(x: &[f64], beta: f64, scale: f64) -> f64 {
    let a = x.iter().fold(0.0f64, |acc, v| acc.max((v * scale).abs()));
    let s: f64 = x
        .iter()
        .map(|v| {
            let u = v * scale;
            (beta * (u - a)).exp() + (beta * (-u - a)).exp()
        })
        .sum();
    a + s.ln() / beta
}

fn check_positive_orthant(x: &[f64], p: f64) -> Result<()> {
    check_vector(x)?;
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(format!(
            "derivatives need 1 < p < ∞, got {p}"
        )));
    }
    if let Some(v) = x.iter().find(|v| **v <= 0.0) {
        return Err(Error::param(
            "x",
            format!("derivatives are defined on the open positive orthant, found {v}"),
        ));
    }
    Ok(())
}

/// Gradient of `M_p(x) = ‖x‖_p` on the open positive orthant:
/// `∂M_p/∂x_k = (x_k / M_p(x))^{p-1}`.
///
/// The conjugate norm of the gradient is one: `‖∇M_p(x)‖_q = 1` with
/// `q = p / (p - 1)`.
pub fn mp_gradient(x: &[f64], p: f64) -> Result<Vec<f64>> {
    check_positive_orthant(x, p)?;
    let m = norm_resolved(x, p);
    Ok(x.iter().map(|v| (v / m).powf(p - 1.0)).collect())
}

/// Second and third partial derivatives of `M_p` at a point of the open
/// positive orthant.
///
/// All entries are computed from the ratios `y_k = x_k / M_p(x) ≤ 1`, which
/// keeps large exponents finite. The fully mixed third derivative is not
/// materialised; [`MpDerivatives::third`] evaluates any index triple.
///
/// Terms with `x_k^{p-3}` are singular at zero for `p < 3` and are evaluated
/// as written, so callers must keep `x` away from zero in that regime.
#[derive(Debug, Clone)]
pub struct MpDerivatives {
    pub p: f64,
    pub norm: f64,
    /// Hessian, symmetric.
    pub second: DMatrix<f64>,
    /// `∂³M_p / ∂x_k³`.
    pub third_diag3: Vec<f64>,
    /// `third_kkl[(k, l)] = ∂³M_p / ∂x_k² ∂x_l` for `k ≠ l`; diagonal holds `∂³M_p / ∂x_k³`.
    pub third_kkl: DMatrix<f64>,
    /// `y_k^{p-1}`, cached for the mixed third derivative.
    pow_p1: Vec<f64>,
}

impl MpDerivatives {
    /// Mixed third derivative formula `(2p−1)(p−1) x_k^{p−1} x_l^{p−1} x_m^{p−1} / M^{3p−1}`,
    /// the value of `∂³M_p / ∂x_k ∂x_l ∂x_m` for pairwise distinct indices.
    pub fn third_klm(&self, k: usize, l: usize, m: usize) -> f64 {
        let p = self.p;
        (2.0 * p - 1.0) * (p - 1.0) * self.pow_p1[k] * self.pow_p1[l] * self.pow_p1[m]
            / (self.norm * self.norm)
    }

    /// `∂³M_p / ∂x_k ∂x_l ∂x_m` for an arbitrary index triple.
    pub fn third(&self, k: usize, l: usize, m: usize) -> f64 {
        match (k == l, l == m, k == m) {
            (true, true, _) => self.third_diag3[k],
            (true, false, _) => self.third_kkl[(k, m)],
            (false, true, _) => self.third_kkl[(l, k)],
            (false, false, true) => self.third_kkl[(k, l)],
            (false, false, false) => self.third_klm(k, l, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.pow_p1.len()
    }
}

/// Second and third partial derivatives of `M_p` (see [`MpDerivatives`]).
pub fn mp_higher_derivatives(x: &[f64], p: f64) -> Result<MpDerivatives> {
    check_positive_orthant(x, p)?;
    let d = x.len();
    let m = norm_resolved(x, p);
    let y: Vec<f64> = x.iter().map(|v| v / m).collect();
    let pow_p1: Vec<f64> = y.iter().map(|v| v.powf(p - 1.0)).collect();
    let pow_p2: Vec<f64> = y.iter().map(|v| v.powf(p - 2.0)).collect();
    let pm1 = p - 1.0;
    let c3 = (2.0 * p - 1.0) * pm1;

    let second = DMatrix::from_fn(d, d, |k, l| {
        if k == l {
            pm1 * (pow_p2[k] - pow_p1[k] * pow_p1[k]) / m
        } else {
            -pm1 * pow_p1[k] * pow_p1[l] / m
        }
    });
    let m2 = m * m;
    let third_diag3: Vec<f64> = y
        .iter()
        .zip(&pow_p1)
        .map(|(&v, &a)| {
            let pow_p3 = v.powf(p - 3.0);
            (pm1 * (p - 2.0) * pow_p3 - 3.0 * pm1 * pm1 * pow_p3 * v.powf(p) + c3 * a * a * a) / m2
        })
        .collect();
    let third_kkl = DMatrix::from_fn(d, d, |k, l| {
        if k == l {
            third_diag3[k]
        } else {
            (-pm1 * pm1 * pow_p2[k] + c3 * pow_p1[k] * pow_p1[k]) * pow_p1[l] / m2
        }
    });
    Ok(MpDerivatives {
        p,
        norm: m,
        second,
        third_diag3,
        third_kkl,
        pow_p1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn naive_norm(x: &[f64], p: f64) -> f64 {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    #[test]
    fn pythagorean_and_simple_cases() {
        assert_relative_eq!(lp_norm(&[3.0, 4.0], LpExponent::Finite(2.0)).unwrap(), 5.0);
        assert_eq!(lp_norm(&[-2.0, 1.0, 0.0], LpExponent::Infinity).unwrap(), 2.0);
        for p in [1.0, 1.5, 3.0, 7.0] {
            let ones = vec![1.0; 9];
            assert_relative_eq!(
                lp_norm(&ones, LpExponent::Finite(p)).unwrap(),
                9f64.powf(1.0 / p),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn matches_direct_summation() {
        let x = [0.3, -1.7, 2.2, 0.05, -0.9];
        let got = lp_norm(&x, LpExponent::Finite(3.0)).unwrap();
        assert_relative_eq!(got, naive_norm(&x, 3.0), max_relative = 1e-12);
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        let z = [0.0; 4];
        for p in [LpExponent::Finite(1.0), LpExponent::LogDim, LpExponent::Infinity] {
            assert_eq!(lp_norm(&z, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn large_exponent_does_not_overflow() {
        let x = [1e200, 3e199];
        let v = lp_norm(&x, LpExponent::Finite(50.0)).unwrap();
        assert!(v.is_finite());
        assert_relative_eq!(v, 1e200, max_relative = 1e-10);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(lp_norm(&[], LpExponent::Infinity), Err(Error::Empty(_))));
        assert!(lp_norm(&[1.0], LpExponent::Finite(0.5)).is_err());
        assert!(lp_norm(&[1.0, 2.0], LpExponent::LogDim).is_err());
        assert!(lp_norm_in_dim(&[1.0, 2.0], LpExponent::LogDim, 10).is_ok());
        assert!(lp_norm(&[f64::NAN, 1.0], LpExponent::Infinity).is_err());
    }

    #[test]
    fn exponent_parsing_round_trips_labels() {
        for p in LpExponent::standard_set() {
            assert_eq!(p.label().parse::<LpExponent>().unwrap(), p);
        }
        assert!("0.3".parse::<LpExponent>().is_err());
        assert!("abc".parse::<LpExponent>().is_err());
    }

    #[test]
    fn smooth_norm_examples() {
        assert_relative_eq!(smooth_norm(&[0.0, 0.0], 2, 0.5).unwrap(), 0.5);
        assert_relative_eq!(smooth_norm(&[3.0, 4.0], 2, 1e-9).unwrap(), 5.0, epsilon = 1e-9);
        assert_relative_eq!(
            smooth_norm(&[1.0, 1.0], 4, 1.0).unwrap(),
            3f64.powf(0.25),
            max_relative = 1e-14
        );
        assert!(smooth_norm(&[1.0], 3, 1.0).is_err());
        assert!(smooth_norm(&[1.0], 2, 0.0).is_err());
    }

    #[test]
    fn smooth_max_examples() {
        for d in [1usize, 5, 40] {
            let z = vec![0.0; d];
            assert_relative_eq!(
                smooth_max(&z, 1.0).unwrap(),
                (2.0 * d as f64).ln(),
                max_relative = 1e-14
            );
        }
        let mut x = vec![0.0; 8];
        x[0] = 5.0;
        let f = smooth_max(&x, 50.0).unwrap();
        let n = lp_norm(&x, LpExponent::LogDim).unwrap();
        assert!(f >= n && f <= n + std::f64::consts::E * 16f64.ln() / 50.0);
        assert!(smooth_max(&x, 0.0).is_err());
        // huge arguments stay finite
        assert!(smooth_max(&[1e6, -2e6], 100.0).unwrap().is_finite());
    }

    #[test]
    fn smooth_max_is_monotone_in_magnitudes() {
        let base = [0.4, -1.1, 0.7, 2.0, -0.2];
        let f0 = smooth_max(&base, 3.0).unwrap();
        for k in 0..base.len() {
            for bump in [0.01, 0.1, 1.0] {
                let mut x = base;
                x[k] += bump * x[k].signum();
                assert!(smooth_max(&x, 3.0).unwrap() >= f0);
            }
        }
    }

    #[test]
    fn scaled_smooth_max_with_infinite_exponent_is_plain() {
        let x = [0.4, -1.1, 0.7];
        assert_eq!(
            smooth_max_scaled(&x, 2.0, LpExponent::Infinity).unwrap(),
            smooth_max(&x, 2.0).unwrap()
        );
        let d = 8f64;
        let v = smooth_max_scaled(&[5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 50.0, LpExponent::LogDim)
            .unwrap();
        let lo = 5.0 / d.powf(1.0 / d.ln());
        assert!(v >= lo && v <= lo + (2.0 * d).ln() / 50.0);
    }

    #[test]
    fn gradient_examples() {
        let g = mp_gradient(&[1.0, 1.0], 2.0).unwrap();
        assert_relative_eq!(g[0], 1.0 / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(g[1], 1.0 / 2f64.sqrt(), max_relative = 1e-14);
        assert!(mp_gradient(&[1.0, 0.0], 2.0).is_err());
        assert!(mp_gradient(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = [1.0, 2.0, 3.0];
        let g = mp_gradient(&x, 3.0).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (naive_norm(&xp, 3.0) - naive_norm(&xm, 3.0)) / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn second_derivative_examples() {
        let d = mp_higher_derivatives(&[1.0, 1.0], 2.0).unwrap();
        let c = 1.0 / (2.0 * 2f64.sqrt());
        assert_relative_eq!(d.second[(0, 0)], c, max_relative = 1e-14);
        assert_relative_eq!(d.second[(0, 1)], -c, max_relative = 1e-14);
        assert_relative_eq!(d.second[(1, 0)], d.second[(0, 1)]);
    }

    #[test]
    fn third_dispatch_is_symmetric() {
        let d = mp_higher_derivatives(&[0.5, 1.5, 2.5, 1.0], 4.0).unwrap();
        let idx = [(0, 0, 1), (0, 1, 0), (1, 0, 0)];
        let v: Vec<f64> = idx.iter().map(|&(a, b, c)| d.third(a, b, c)).collect();
        assert_relative_eq!(v[0], v[1]);
        assert_relative_eq!(v[1], v[2]);
        assert_relative_eq!(d.third(0, 1, 2), d.third(2, 0, 1));
        assert_eq!(d.third(3, 3, 3), d.third_diag3[3]);
    }
}

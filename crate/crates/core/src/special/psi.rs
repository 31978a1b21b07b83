//! The variance-limit function `psi_{r,alpha}(theta2)` and the limit functions
//! built on it.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::RwLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bessel::{bessel_j0, hankel1_0};
use super::quad::integrate;
use crate::error::{Error, Result};
use crate::model::Family;

const MIN_TOL: f64 = 1e-12;
const MAX_TOL: f64 = 1e-6;
const MAX_PANELS: usize = 4000;
/// Start of the Hankel-expansion regime for the rotated tail contour.
const HANKEL_MIN: f64 = 25.0;
/// Length of the rotated contour; the integrand there is below e^{-45}.
const CONTOUR_LEN: f64 = 45.0;

/// Arguments of `psi_{r,alpha}(theta2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiQuery {
    pub r: f64,
    pub alpha: f64,
    pub theta2: f64,
}

impl PsiQuery {
    pub fn new(r: f64, alpha: f64, theta2: f64) -> Result<Self> {
        let q = Self { r, alpha, theta2 };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParam { name, reason: reason.into() });
        if !(self.r.is_finite() && self.r > 0.0) {
            return bad("r", "must be finite and positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha", "must lie in (0, 2)");
        }
        if !(self.theta2.is_finite() && self.theta2 > 0.0) {
            return bad("theta2", "must be finite and positive");
        }
        Ok(())
    }

    /// Frequency `a = r / sqrt(theta2)` of the Bessel bracket.
    pub fn scale(&self) -> f64 {
        self.r / self.theta2.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub value: f64,
    pub abs_error_bound: f64,
    pub nodes_used: usize,
    /// Split point between numerical quadrature and the analytic tail.
    pub tail_cut: f64,
}

/// `J0(sqrt(2) u) - 2 J0(u) + 1`, nonnegative for all real `u`.
pub fn bessel_bracket(u: f64) -> f64 {
    if u.abs() <= 2.0 {
        // alternating series without the cancelling k = 0, 1 terms
        let q = 0.25 * u * u;
        let mut fact2 = 4.0; // (2!)^2
        let mut qk = q * q;
        let mut pow2 = 4.0;
        let mut sum = 0.0;
        for k in 2..40u32 {
            if k > 2 {
                fact2 *= (k * k) as f64;
                qk *= q;
                pow2 *= 2.0;
            }
            let term = (pow2 - 2.0) * qk / fact2;
            sum += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        bessel_j0(SQRT_2 * u) - 2.0 * bessel_j0(u) + 1.0
    }
}

/// `int_U^inf u^{-beta} J0(u) du` for `U >= 25`, along the vertical ray from `U`.
fn bessel_power_tail(beta: f64, u0: f64, abs_tol: f64) -> (f64, f64, usize) {
    let integrand = |t: f64| {
        let z = Complex64::new(u0, t);
        (Complex64::i() * z.powf(-beta) * hankel1_0(z)).re
    };
    let breaks = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 30.0, CONTOUR_LEN];
    let q = integrate(integrand, &breaks, abs_tol, MAX_PANELS);
    // remainder beyond the ray end, |z^{-beta} H| <= |H| <~ sqrt(2/(pi U)) e^{-t}
    let beyond = u0.powf(-beta) * (2.0 / (PI * u0)).sqrt() * (-CONTOUR_LEN).exp();
    (q.value, q.abs_err + beyond, q.evals)
}

/// Structural integral `I = int_0^inf (1 - e^{-x^2}) x^{-1-2 alpha} B(a x) dx`.
fn psi_integral(a: f64, alpha: f64, abs_tol: f64, cut: Option<f64>) -> Result<QuadratureReport> {
    let x_cut = cut.unwrap_or_else(|| (HANKEL_MIN / a).max(6.0));
    let expo = -1.0 - 2.0 * alpha;
    let head_fn = |x: f64| -(-x * x).exp_m1() * x.powf(expo) * bessel_bracket(a * x);

    // panels no wider than half a period of the fastest oscillation
    let half_period = PI / (SQRT_2 * a);
    let mut breaks = vec![0.0];
    let first = 1.0f64.min(x_cut);
    breaks.push(first);
    let pieces = ((x_cut - first) / half_period).ceil().max(1.0) as usize;
    for k in 1..=pieces {
        breaks.push(first + (x_cut - first) * k as f64 / pieces as f64);
    }
    breaks.dedup();

    let head = integrate(head_fn, &breaks, 0.5 * abs_tol, MAX_PANELS);
    let beta = 1.0 + 2.0 * alpha;
    let const_tail = x_cut.powf(-2.0 * alpha) / (2.0 * alpha);
    let c1 = SQRT_2 * a;
    let (t1, e1, n1) = bessel_power_tail(beta, c1 * x_cut, 0.25 * abs_tol / c1.powf(2.0 * alpha));
    let (t2, e2, n2) = bessel_power_tail(beta, a * x_cut, 0.125 * abs_tol / a.powf(2.0 * alpha));
    let tail = const_tail + c1.powf(2.0 * alpha) * t1 - 2.0 * a.powf(2.0 * alpha) * t2;
    // dropped Gaussian factor beyond the cut, using |B| <= 4
    let gauss = 4.0 * x_cut.powf(expo) * (-x_cut * x_cut).exp() / (2.0 * x_cut);
    let bound = head.abs_err
        + c1.powf(2.0 * alpha) * e1
        + 2.0 * a.powf(2.0 * alpha) * e2
        + gauss
        + 8.0 * f64::EPSILON * const_tail;
    Ok(QuadratureReport {
        value: head.value + tail,
        abs_error_bound: bound,
        nodes_used: head.evals + n1 + n2,
        tail_cut: x_cut,
    })
}

fn check_tol(tol: f64) -> Result<()> {
    if !(MIN_TOL..=MAX_TOL).contains(&tol) {
        return Err(Error::InvalidParam {
            name: "tol",
            reason: format!("must lie in [{MIN_TOL:e}, {MAX_TOL:e}]"),
        });
    }
    Ok(())
}

/// Evaluates psi with an explicit split point; `None` picks the default.
pub fn psi_with_cut(q: &PsiQuery, tol: f64, cut: Option<f64>) -> Result<QuadratureReport> {
    q.validate()?;
    check_tol(tol)?;
    if let Some(x) = cut {
        if !(x.is_finite() && x * q.scale() >= HANKEL_MIN && x >= 6.0) {
            return Err(Error::InvalidParam {
                name: "cut",
                reason: "must satisfy cut >= 6 and cut * r / sqrt(theta2) >= 25".into(),
            });
        }
    }
    let pref = 2.0 / (q.theta2 * PI);
    let raw = psi_integral(q.scale(), q.alpha, tol / pref, cut)?;
    let report = QuadratureReport {
        value: pref * raw.value,
        abs_error_bound: pref * raw.abs_error_bound,
        ..raw
    };
    if report.abs_error_bound > tol {
        return Err(Error::ToleranceNotMet {
            requested: tol,
            achieved: report.abs_error_bound,
        });
    }
    Ok(report)
}

/// `psi_{r,alpha}(theta2) = 2/(theta2 pi) int_0^inf (1-e^{-x^2}) x^{-1-2alpha}
/// (J0(sqrt2 r x/sqrt theta2) - 2 J0(r x/sqrt theta2) + 1) dx`.
pub fn psi(q: &PsiQuery, tol: f64) -> Result<QuadratureReport> {
    psi_with_cut(q, tol, None)
}

/// `theta2^alpha psi_{r,alpha}(theta2)`.
pub fn psi_tilde(q: &PsiQuery, tol: f64) -> Result<QuadratureReport> {
    let s = q.theta2.powf(q.alpha);
    let base = psi(q, tol / s.max(1.0))?;
    Ok(QuadratureReport {
        value: s * base.value,
        abs_error_bound: s * base.abs_error_bound,
        ..base
    })
}

/// Family-dependent psi: plain for Q1, tilde for Q2.
pub fn psi_family(q: &PsiQuery, family: Family, tol: f64) -> Result<f64> {
    Ok(match family {
        Family::Q1 => psi(q, tol)?.value,
        Family::Q2 => psi_tilde(q, tol)?.value,
    })
}

/// Central-difference derivative in `theta2` with step `1e-5 theta2`.
pub fn psi_dtheta2(q: &PsiQuery, tol: f64) -> Result<f64> {
    let h = 1e-5 * q.theta2;
    let up = psi(&PsiQuery { theta2: q.theta2 + h, ..*q }, tol)?.value;
    let dn = psi(&PsiQuery { theta2: q.theta2 - h, ..*q }, tol)?.value;
    Ok((up - dn) / (2.0 * h))
}

/// Central-difference derivative in `alpha`.
pub fn psi_dalpha(q: &PsiQuery, tol: f64) -> Result<f64> {
    let h = 1e-4_f64.min(0.5 * q.alpha.min(2.0 - q.alpha));
    let up = psi(&PsiQuery { alpha: q.alpha + h, ..*q }, tol)?.value;
    let dn = psi(&PsiQuery { alpha: q.alpha - h, ..*q }, tol)?.value;
    Ok((up - dn) / (2.0 * h))
}

/// Structural parameter `(kappa, eta, theta2, sigma2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vartheta {
    pub kappa: f64,
    pub eta: f64,
    pub theta2: f64,
    pub sigma2: f64,
}

/// Pointwise variance limit `sigma2 e^{-kappa y - eta z} psi`.
pub fn f_limit(y: f64, z: f64, vt: &Vartheta, r: f64, alpha: f64, family: Family, tol: f64) -> Result<f64> {
    let q = PsiQuery::new(r, alpha, vt.theta2)?;
    let p = psi_family(&q, family, tol)?;
    Ok(vt.sigma2 * (-vt.kappa * y - vt.eta * z).exp() * p)
}

/// `int_b^{1-b} e^{-k x} dx / (1 - 2b)`.
fn mean_exp(k: f64, b: f64) -> f64 {
    let w = 1.0 - 2.0 * b;
    if k == 0.0 {
        return 1.0;
    }
    (-k * b).exp() * -(-k * w).exp_m1() / (k * w)
}

/// Limit of the spatially averaged rescaled variance over `[b, 1-b]^2`.
pub fn g_limit(vt: &Vartheta, r: f64, alpha: f64, b: f64, family: Family, tol: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&b) {
        return Err(Error::InvalidParam {
            name: "b",
            reason: "margin must lie in [0, 1/2)".into(),
        });
    }
    let q = PsiQuery::new(r, alpha, vt.theta2)?;
    let p = psi_family(&q, family, tol)?;
    Ok(vt.sigma2 * p * mean_exp(vt.kappa, b) * mean_exp(vt.eta, b))
}

/// Concurrent memo of psi values at a fixed tolerance.
#[derive(Debug)]
pub struct PsiCache {
    tol: f64,
    map: RwLock<HashMap<(u64, u64, u64, Family), f64>>,
}

impl PsiCache {
    pub fn new(tol: f64) -> Result<Self> {
        check_tol(tol)?;
        Ok(Self {
            tol,
            map: RwLock::new(HashMap::new()),
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn get(&self, q: &PsiQuery, family: Family) -> Result<f64> {
        let key = (q.r.to_bits(), q.alpha.to_bits(), q.theta2.to_bits(), family);
        if let Some(&v) = self.map.read().expect("psi cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = psi_family(q, family, self.tol)?;
        self.map.write().expect("psi cache poisoned").insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("psi cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

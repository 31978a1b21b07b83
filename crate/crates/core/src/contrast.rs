//! Minimum-contrast estimation of `(kappa, eta, theta2, sigma2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::IncrementStats;
use crate::error::{Error, Result};
use crate::model::Family;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::special::{PsiCache, PsiQuery, Vartheta};

/// Lower identifiability bound of `theta2` valid for every damping value.
pub fn theta2_floor(r: f64) -> f64 {
    r * r / (8.0 * std::f64::consts::SQRT_2.ln_1p())
}

/// Box parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpaceXi {
    pub kappa: (f64, f64),
    pub eta: (f64, f64),
    pub theta2: (f64, f64),
    pub sigma2: (f64, f64),
}

impl ParamSpaceXi {
    /// Default box for aspect ratio `r`.
    pub fn for_ratio(r: f64) -> Self {
        Self {
            kappa: (-5.0, 5.0),
            eta: (-5.0, 5.0),
            theta2: (theta2_floor(r).max(1e-3), 5.0),
            sigma2: (1e-4, 25.0),
        }
    }

    pub fn validate(&self, r: f64) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(ok(self.kappa) && ok(self.eta) && ok(self.theta2) && ok(self.sigma2)) {
            return Err(Error::InvalidParam {
                name: "xi",
                reason: "every interval must be finite and nonempty".into(),
            });
        }
        if self.theta2.0 < theta2_floor(r) || self.theta2.0 <= 0.0 {
            return Err(Error::InvalidParam {
                name: "xi.theta2",
                reason: format!("lower bound must be at least {:.6e}", theta2_floor(r)),
            });
        }
        if self.sigma2.0 <= 0.0 {
            return Err(Error::InvalidParam {
                name: "xi.sigma2",
                reason: "lower bound must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, v: &Vartheta) -> bool {
        let inside = |x: f64, (a, b): (f64, f64)| a <= x && x <= b;
        inside(v.kappa, self.kappa) && inside(v.eta, self.eta) && inside(v.theta2, self.theta2) && inside(v.sigma2, self.sigma2)
    }
}

/// Limit weights of one `(kappa, eta, theta2)`: `h_{jk} = p a_j b_k`, `h̃_{jk} = pt a_j b_k`.
struct Design {
    p: f64,
    pt: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `sum V h + sum Ṽ h̃`.
    vh: f64,
    /// `sum h^2 + sum h̃^2`.
    hh: f64,
}

impl Design {
    fn best_sigma2(&self, bounds: (f64, f64)) -> Result<f64> {
        if self.hh <= 0.0 || !self.hh.is_finite() {
            return Err(Error::DegenerateDesign);
        }
        Ok((self.vh / self.hh).clamp(bounds.0, bounds.1))
    }
}

/// Contrast objective for one set of rescaled statistics.
pub struct Contrast<'a> {
    stats: &'a IncrementStats,
    family: Family,
    cache: &'a PsiCache,
}

impl<'a> Contrast<'a> {
    pub fn new(stats: &'a IncrementStats, family: Family, cache: &'a PsiCache) -> Self {
        Self { stats, family, cache }
    }

    fn design(&self, kappa: f64, eta: f64, theta2: f64) -> Result<Design> {
        let st = self.stats;
        let p = self.cache.get(&PsiQuery::new(st.r, st.alpha, theta2)?, self.family)?;
        let pt = self.cache.get(&PsiQuery::new(st.r / std::f64::consts::SQRT_2, st.alpha, theta2)?, self.family)?;
        let a: Vec<f64> = st.mid_y.iter().map(|y| (-kappa * y).exp()).collect();
        let b: Vec<f64> = st.mid_z.iter().map(|z| (-eta * z).exp()).collect();
        let (mut av, mut avt) = (0.0, 0.0);
        for (j, aj) in a.iter().enumerate() {
            let (row, rowt) = (st.v.row(j), st.v_tilde.row(j));
            let (mut s, mut t) = (0.0, 0.0);
            for (k, bk) in b.iter().enumerate() {
                s += row[k] * bk;
                t += rowt[k] * bk;
            }
            av += aj * s;
            avt += aj * t;
        }
        let h2 = a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>();
        Ok(Design {
            p,
            pt,
            a,
            b,
            vh: p * av + pt * avt,
            hh: (p * p + pt * pt) * h2,
        })
    }

    fn residual(&self, d: &Design, s2: f64) -> f64 {
        let st = self.stats;
        let (c, ct) = (s2 * d.p, s2 * d.pt);
        let mut acc = 0.0;
        for (j, aj) in d.a.iter().enumerate() {
            let (row, rowt) = (st.v.row(j), st.v_tilde.row(j));
            for (k, bk) in d.b.iter().enumerate() {
                let w = aj * bk;
                let (e, et) = (row[k] - c * w, rowt[k] - ct * w);
                acc += e * e + et * et;
            }
        }
        acc / (st.cells_y * st.cells_z) as f64
    }

    /// Contrast at `vt`.
    pub fn value(&self, vt: &Vartheta) -> Result<f64> {
        let d = self.design(vt.kappa, vt.eta, vt.theta2)?;
        Ok(self.residual(&d, vt.sigma2))
    }

    /// Exact minimizer over `sigma2` clipped to `bounds`.
    pub fn profile_sigma2(&self, kappa: f64, eta: f64, theta2: f64, bounds: (f64, f64)) -> Result<f64> {
        self.design(kappa, eta, theta2)?.best_sigma2(bounds)
    }

    /// Contrast minimized over `sigma2`, with the minimizer.
    pub fn profiled(&self, kappa: f64, eta: f64, theta2: f64, bounds: (f64, f64)) -> Result<(f64, f64)> {
        let d = self.design(kappa, eta, theta2)?;
        let s2 = d.best_sigma2(bounds)?;
        Ok((self.residual(&d, s2), s2))
    }
}

/// Contrast value of the statistics at `vt` (computed at `stats.alpha`).
pub fn contrast_value(stats: &IncrementStats, vt: &Vartheta, family: Family, cache: &PsiCache) -> Result<f64> {
    Contrast::new(stats, family, cache).value(vt)
}

/// Profiled `sigma2` at `(kappa, eta, theta2)`, clipped to the box.
pub fn profile_sigma2(
    stats: &IncrementStats,
    kappa: f64,
    eta: f64,
    theta2: f64,
    xi: &ParamSpaceXi,
    family: Family,
    cache: &PsiCache,
) -> Result<f64> {
    Contrast::new(stats, family, cache).profile_sigma2(kappa, eta, theta2, xi.sigma2)
}

/// Range outside of which the damping input is clamped before evaluating the contrast.
pub const ALPHA_CLAMP: (f64, f64) = (0.05, 1.95);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub start: [f64; 3],
    pub vartheta: Vartheta,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub vartheta_hat: Vartheta,
    pub objective: f64,
    pub theta1_hat: f64,
    pub eta1_hat: f64,
    /// Damping value the contrast was evaluated at.
    pub alpha_used: f64,
    pub alpha_clamped: bool,
    /// Index into `restarts` of the returned optimum.
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
    pub iterations: usize,
    pub converged: bool,
}

/// Options for [`minimize_contrast`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastOptions {
    pub nelder_mead: NelderMeadOptions,
    /// Lattice points per axis of the restart grid.
    pub lattice: usize,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        Self {
            nelder_mead: NelderMeadOptions::default(),
            lattice: 3,
        }
    }
}

/// Clamps the damping input into [`ALPHA_CLAMP`].
pub fn clamp_alpha(alpha_hat: f64) -> Result<(f64, bool)> {
    if !alpha_hat.is_finite() {
        return Err(Error::InvalidParam {
            name: "alpha_hat",
            reason: "must be finite".into(),
        });
    }
    let a = alpha_hat.clamp(ALPHA_CLAMP.0, ALPHA_CLAMP.1);
    Ok((a, a != alpha_hat))
}

/// Multi-start minimization with `sigma2` profiled out. `stats` must have
/// been rescaled at the (clamped) damping value; see [`crate::alpha::CellSums::rescale`].
pub fn minimize_contrast(
    stats: &IncrementStats,
    xi: &ParamSpaceXi,
    family: Family,
    cache: &PsiCache,
    opts: &ContrastOptions,
) -> Result<ContrastResult> {
    xi.validate(stats.r)?;
    let k = opts.lattice.max(1);
    let frac = |i: usize| (i + 1) as f64 / (k + 1) as f64;
    let at = |(a, b): (f64, f64), i: usize| a + (b - a) * frac(i);
    let mut starts = Vec::with_capacity(k * k * k);
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                starts.push([at(xi.kappa, i), at(xi.eta, j), at(xi.theta2, l)]);
            }
        }
    }
    let contrast = Contrast::new(stats, family, cache);
    let lo = [xi.kappa.0, xi.eta.0, xi.theta2.0];
    let hi = [xi.kappa.1, xi.eta.1, xi.theta2.1];
    let restarts: Vec<Result<RestartOutcome>> = starts
        .par_iter()
        .map(|start| {
            let mut failure = None;
            let m = nelder_mead(
                |x| match contrast.profiled(x[0], x[1], x[2], xi.sigma2) {
                    Ok((v, _)) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                },
                start,
                &lo,
                &hi,
                &opts.nelder_mead,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let (value, s2) = contrast.profiled(m.x[0], m.x[1], m.x[2], xi.sigma2)?;
            Ok(RestartOutcome {
                start: *start,
                vartheta: Vartheta {
                    kappa: m.x[0],
                    eta: m.x[1],
                    theta2: m.x[2],
                    sigma2: s2,
                },
                value,
                iterations: m.iterations,
                converged: m.converged,
            })
        })
        .collect();
    let restarts: Vec<RestartOutcome> = restarts.into_iter().collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in restarts.iter().enumerate() {
        if r.value < restarts[best].value {
            best = i;
        }
    }
    let b = &restarts[best];
    let vt = b.vartheta;
    Ok(ContrastResult {
        vartheta_hat: vt,
        objective: b.value,
        theta1_hat: vt.kappa * vt.theta2,
        eta1_hat: vt.eta * vt.theta2,
        alpha_used: stats.alpha,
        alpha_clamped: false,
        best_restart: best,
        iterations: restarts.iter().map(|r| r.iterations).sum(),
        converged: b.converged,
        restarts,
    })
}

/// ϑ-estimate from raw cell sums and a raw damping estimate: clamps the
/// damping value, rescales, minimizes.
pub fn estimate_vartheta(
    sums: &crate::alpha::CellSums,
    alpha_hat: f64,
    xi: &ParamSpaceXi,
    family: Family,
    cache: &PsiCache,
    opts: &ContrastOptions,
) -> Result<ContrastResult> {
    let (alpha, clamped) = clamp_alpha(alpha_hat)?;
    let stats = sums.rescale(alpha)?;
    let mut res = minimize_contrast(&stats, xi, family, cache, opts)?;
    res.alpha_clamped = clamped;
    Ok(res)
}

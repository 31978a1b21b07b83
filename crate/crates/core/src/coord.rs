//! Approximate coordinate processes and the plug-in estimators built on them.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, ModelParams};
use crate::sim::FieldRecord;
use crate::special::Vartheta;

pub type Matrix5 = SMatrix<f64, 5, 5>;

const PI2: f64 = PI * PI;

/// Antiderivative of `sqrt2 sin(pi l x) e^{a x / 2}`.
pub fn g_fun(l: usize, x: f64, a: f64) -> f64 {
    let w = PI * l as f64;
    let h = 0.5 * a;
    SQRT_2 * (h * x).exp() / (h * h + w * w) * (h * (w * x).sin() - w * (w * x).cos())
}

/// Cell weights `g_l(x_j) - g_l(x_{j-1})`, `j = 1..=cells`, on the uniform grid.
pub fn cell_weights(l: usize, a: f64, cells: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..=cells).map(|j| g_fun(l, j as f64 / cells as f64, a)).collect();
    g.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Approximate coordinate `x̂_{l1,l2}` at record times `times`.
pub fn approx_coordinate(record: &FieldRecord, l1: usize, l2: usize, kappa: f64, eta: f64, times: &[usize]) -> Result<Vec<f64>> {
    let (my, mz) = match (record.y.uniform_cells(), record.z.uniform_cells()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NonUniformGrid),
    };
    if l1 == 0 || l2 == 0 {
        return Err(Error::InvalidParam {
            name: "mode",
            reason: "indices start at 1".into(),
        });
    }
    let wy = cell_weights(l1, kappa, my);
    let wz = cell_weights(l2, eta, mz);
    let vals = record.values();
    times
        .iter()
        .map(|&i| {
            if i >= vals.dim().0 {
                return Err(Error::DimMismatch(format!("time index {i} beyond record")));
            }
            let slab = vals.index_axis(ndarray::Axis(0), i);
            let mut acc = 0.0;
            for (j, wj) in wy.iter().enumerate() {
                let row = slab.row(j);
                let mut s = 0.0;
                for (k, wk) in wz.iter().enumerate() {
                    s += row[k] * wk;
                }
                acc += wj * s;
            }
            Ok(acc)
        })
        .collect()
}

/// Realized quadratic variation of a path.
pub fn coord_qv(path: &[f64]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// Record times `0, s, 2s, ..., n s` with `s = floor(N / n)`.
pub fn thinned_times(record_steps: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > record_steps {
        return Err(Error::DegenerateView(format!("need 1 <= n <= {record_steps}, got {n}")));
    }
    let s = record_steps / n;
    Ok((0..=n).map(|i| i * s).collect())
}

/// `L^{a ~^ b}`: `L^a` if `a < b`, `L^b / log L` if equal, `L^b` otherwise.
pub fn tilde_min_pow(l: f64, a: f64, b: f64) -> f64 {
    if a < b {
        l.powf(a)
    } else if a == b {
        l.powf(b) / l.ln()
    } else {
        l.powf(b)
    }
}

/// Balance conditions of the coordinate stage evaluated at the estimated damping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostics {
    /// `n / L^{2(alpha ~^ 1)}`, for consistency.
    pub consistency: f64,
    /// `n / L^{alpha ~^ 1}`, for the CLT.
    pub clt: f64,
    /// `n^2 / L^{2(alpha ~^ 1)}`.
    pub clt_squared: f64,
}

pub fn rate_diagnostics(n: usize, m_min: usize, alpha_hat: f64) -> RateDiagnostics {
    let (n, l) = (n as f64, m_min as f64);
    let one = tilde_min_pow(l, alpha_hat, 1.0);
    let two = tilde_min_pow(l * l, alpha_hat, 1.0);
    RateDiagnostics {
        consistency: n / two,
        clt: n / one,
        clt_squared: n * n / two,
    }
}

/// Plug-in estimates of one family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlugIn {
    /// Q1 only.
    pub theta0: Option<f64>,
    /// Q2 only.
    pub mu0: Option<f64>,
    pub theta1: f64,
    pub eta1: f64,
    pub theta2: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordEstimates {
    pub family: Family,
    pub qv11: f64,
    pub qv12: f64,
    /// `λ̃_{1,l}` for Q1, `μ̄_{1,l}` for Q2: the eigenvalues implied by the variations.
    pub implied11: f64,
    pub implied12: f64,
    pub estimates: PlugIn,
    /// Damping input below 0.05 makes `1 / alpha` exponents fragile.
    pub fragile: bool,
    pub rates: Option<RateDiagnostics>,
}

fn check_qv(qv11: f64, qv12: f64) -> Result<()> {
    for (l2, v) in [(1, qv11), (2, qv12)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveQV { l1: 1, l2, value: v });
        }
    }
    Ok(())
}

fn check_inputs(vt: &Vartheta, alpha_hat: f64) -> Result<()> {
    if !(alpha_hat > 0.0 && alpha_hat.is_finite()) {
        return Err(Error::InvalidParam {
            name: "alpha_hat",
            reason: format!("must be positive, got {alpha_hat}"),
        });
    }
    if !(vt.sigma2 > 0.0 && vt.theta2 > 0.0) {
        return Err(Error::InvalidParam {
            name: "vartheta",
            reason: "sigma2 and theta2 must be positive".into(),
        });
    }
    Ok(())
}

/// Q1 plug-ins from the variations of modes (1,1), (1,2).
pub fn q1_plug_in(qv11: f64, qv12: f64, vt: &Vartheta, alpha_hat: f64) -> Result<CoordEstimates> {
    check_qv(qv11, qv12)?;
    check_inputs(vt, alpha_hat)?;
    let l11 = (vt.sigma2 / qv11).powf(1.0 / alpha_hat);
    let l12 = (vt.sigma2 / qv12).powf(1.0 / alpha_hat);
    let theta0 = -l11 + ((vt.kappa * vt.kappa + vt.eta * vt.eta) / 4.0 + 2.0 * PI2) * vt.theta2;
    let theta2 = (l12 - l11) / (3.0 * PI2);
    Ok(CoordEstimates {
        family: Family::Q1,
        qv11,
        qv12,
        implied11: l11,
        implied12: l12,
        estimates: PlugIn {
            theta0: Some(theta0),
            mu0: None,
            theta1: vt.kappa * theta2,
            eta1: vt.eta * theta2,
            theta2,
            sigma2: vt.sigma2 / vt.theta2 * theta2,
        },
        fragile: alpha_hat < 0.05,
        rates: None,
    })
}

/// Q2 plug-ins from the variations of modes (1,1), (1,2).
pub fn q2_plug_in(qv11: f64, qv12: f64, vt: &Vartheta, alpha_hat: f64) -> Result<CoordEstimates> {
    check_qv(qv11, qv12)?;
    check_inputs(vt, alpha_hat)?;
    let e = -1.0 / alpha_hat;
    let gap = qv12.powf(e) - qv11.powf(e);
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::InvertedModeOrder);
    }
    let sigma2 = (3.0 * PI2 / gap).powf(alpha_hat);
    let m11 = (vt.sigma2 / qv11).powf(1.0 / alpha_hat);
    let m12 = (vt.sigma2 / qv12).powf(1.0 / alpha_hat);
    let theta2 = vt.theta2 / vt.sigma2 * sigma2;
    Ok(CoordEstimates {
        family: Family::Q2,
        qv11,
        qv12,
        implied11: m11,
        implied12: m12,
        estimates: PlugIn {
            theta0: None,
            mu0: Some(m11 - 2.0 * PI2),
            theta1: vt.kappa * theta2,
            eta1: vt.eta * theta2,
            theta2,
            sigma2,
        },
        fragile: alpha_hat < 0.05,
        rates: None,
    })
}

/// Plug-ins of `family` from variations.
pub fn plug_in(family: Family, qv11: f64, qv12: f64, vt: &Vartheta, alpha_hat: f64) -> Result<CoordEstimates> {
    match family {
        Family::Q1 => q1_plug_in(qv11, qv12, vt, alpha_hat),
        Family::Q2 => q2_plug_in(qv11, qv12, vt, alpha_hat),
    }
}

/// Full coordinate stage on a uniform-grid record: modes (1,1) and (1,2) at
/// `n` thinned times, weights from the estimated curvatures.
pub fn coordinate_stage(record: &FieldRecord, n: usize, vt: &Vartheta, alpha_hat: f64, family: Family) -> Result<CoordEstimates> {
    let times = thinned_times(record.time.steps, n)?;
    let qv = |l2| -> Result<f64> { Ok(coord_qv(&approx_coordinate(record, 1, l2, vt.kappa, vt.eta, &times)?)) };
    let mut est = plug_in(family, qv(1)?, qv(2)?, vt, alpha_hat)?;
    let m_min = record.y.len().min(record.z.len()) - 1;
    est.rates = Some(rate_diagnostics(n, m_min, alpha_hat));
    Ok(est)
}

fn rank_two(a11: f64, a12: f64, v1: SVector<f64, 5>, v2: SVector<f64, 5>, scale: f64) -> Matrix5 {
    (v1 * v1.transpose() * (a11 * a11) + v2 * v2.transpose() * (a12 * a12)) * scale
}

/// Limiting covariance of the `sqrt(n)`-scaled plug-in errors, ordered
/// `(theta0 | mu0, theta1, eta1, theta2, sigma2)`, from the linearization of
/// the estimators around the truth.
pub fn asymptotic_cov(params: &ModelParams) -> Result<Matrix5> {
    let s = params.spectrum()?;
    let (t1, e1, t2, s2, a) = (params.theta1, params.eta1, params.theta2, params.sigma * params.sigma, params.alpha);
    match params.noise.family() {
        Family::Q1 => {
            let v1 = SVector::from([3.0 * PI2, s.kappa, s.eta, 1.0, s2 / t2]);
            let v2 = SVector::from([0.0, s.kappa, s.eta, 1.0, s2 / t2]);
            Ok(rank_two(s.lambda(1, 1), s.lambda(1, 2), v1, v2, 2.0 / (9.0 * PI2 * PI2 * a * a)))
        }
        Family::Q2 => {
            let (m11, m12) = (s.mu(1, 1).expect("Q2 spectrum"), s.mu(1, 2).expect("Q2 spectrum"));
            let v3 = SVector::from([3.0 * PI2 / a, t1, e1, t2, s2]);
            let v4 = SVector::from([0.0, t1, e1, t2, s2]);
            Ok(rank_two(m11, m12, v3, v4, 2.0 / (9.0 * PI2 * PI2)))
        }
    }
}

/// The block matrix `2 [[B11, B12], [B12^T, B22]]` with the blocks exactly as
/// printed in the limit theorems.
pub fn asymptotic_cov_as_printed(params: &ModelParams) -> Result<Matrix5> {
    let s = params.spectrum()?;
    let (t2, a) = (params.theta2, params.alpha);
    let th = SVector::<f64, 4>::from([params.theta1, params.eta1, t2, params.sigma * params.sigma]);
    let (b11, b12, b22) = match params.noise.family() {
        Family::Q1 => {
            let (l11, l12) = (s.lambda(1, 1), s.lambda(1, 2));
            (
                l11 * l11 / (a * a),
                l11 * l11 / (3.0 * PI2 * t2 * a * a),
                2.0 * (l11 * l11 + l12 * l12) / (9.0 * PI2 * PI2 * t2 * t2 * a * a),
            )
        }
        Family::Q2 => {
            let (m11, m12) = (s.mu(1, 1).expect("Q2 spectrum"), s.mu(1, 2).expect("Q2 spectrum"));
            (
                m11 * m11 / (a * a),
                m11 * m11 / (3.0 * PI2 * t2 * a * a),
                2.0 * (m11 * m11 + m12 * m12) / (9.0 * PI2 * PI2),
            )
        }
    };
    let mut m = Matrix5::zeros();
    m[(0, 0)] = b11;
    for i in 0..4 {
        m[(0, i + 1)] = b12 * th[i];
        m[(i + 1, 0)] = b12 * th[i];
        for j in 0..4 {
            m[(i + 1, j + 1)] = b22 * th[i] * th[j];
        }
    }
    Ok(m * 2.0)
}

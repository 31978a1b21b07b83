//! Derivative-free minimization on a box.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Stop when the simplex diameter, measured in box-width units, drops below this.
    pub xtol: f64,
    pub max_evals: usize,
    /// Initial edge length in box-width units.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-8,
            max_evals: 4000,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead with every trial point projected onto `[lo, hi]`, restarted
/// from the best vertex until a restart neither moves nor improves it.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    const MAX_RESTARTS: usize = 8;
    let mut best = nelder_mead_once(&mut f, x0, lo, hi, opts, opts.max_evals);
    for _ in 0..MAX_RESTARTS {
        if !best.converged || best.evals >= opts.max_evals {
            break;
        }
        let next = nelder_mead_once(&mut f, &best.x, lo, hi, opts, opts.max_evals - best.evals);
        let moved = next
            .x
            .iter()
            .zip(&best.x)
            .zip(lo.iter().zip(hi))
            .any(|((a, b), (l, h))| (a - b).abs() > opts.xtol * (h - l));
        let improved = next.value < best.value;
        let (evals, iterations) = (best.evals + next.evals, best.iterations + next.iterations);
        let keep = if improved { next } else { best };
        best = Minimum { evals, iterations, ..keep };
        if !(improved && moved) {
            break;
        }
    }
    best
}

fn nelder_mead_once(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
    budget: usize,
) -> Minimum {
    let d = x0.len();
    assert!(lo.len() == d && hi.len() == d, "bounds must match the dimension");
    let width: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let to_x = |u: &[f64]| -> Vec<f64> { (0..d).map(|i| lo[i] + width[i] * u[i]).collect() };
    let clamp = |u: &mut [f64]| u.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut evals = 0usize;
    let mut eval = |u: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(&to_x(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut u0: Vec<f64> = (0..d)
        .map(|i| if width[i] > 0.0 { (x0[i] - lo[i]) / width[i] } else { 0.0 })
        .collect();
    clamp(&mut u0);
    let mut simplex = vec![u0.clone()];
    for i in 0..d {
        let mut v = u0.clone();
        // step inward when the start sits on the upper face
        v[i] += if v[i] + opts.initial_step <= 1.0 { opts.initial_step } else { -opts.initial_step };
        clamp(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diam = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < opts.xtol {
            converged = true;
            break;
        }
        if evals >= budget {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for i in 0..d {
                centroid[i] += v[i] / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..d).map(|i| centroid[i] + t * (simplex[d][i] - centroid[i])).collect();
            clamp(&mut p);
            p
        };
        let xr = along(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(values[d]) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        let (best, rest) = simplex.split_at_mut(1);
        for (v, fv) in rest.iter_mut().zip(&mut values[1..]) {
            for (x, b) in v.iter_mut().zip(&best[0]) {
                *x = b + shrink * (*x - b);
            }
            *fv = eval(v, &mut evals);
        }
    }
    Minimum {
        x: to_x(&simplex[0]),
        value: values[0],
        iterations,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.0, 1.5], &[-2.0, -2.0], &[2.0, 2.0], &NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let m = nelder_mead(f, &[0.5, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &NelderMeadOptions::default());
        assert!((m.x[0] + 1.0).abs() < 1e-7 && (m.x[1] - 0.5).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let opts = NelderMeadOptions {
            max_evals: 10,
            ..Default::default()
        };
        let m = nelder_mead(f, &[0.9, 0.9, 0.9], &[-1.0; 3], &[1.0; 3], &opts);
        assert!(!m.converged);
    }
}

//! Expected damping estimate of a truncated field, without simulation, across truncation levels.

use rayon::prelude::*;
use spde2d::harness::ExperimentConfig;
use spde2d::model::NodeSet;

fn time_sum(lambda: f64, s2: f64, dt: f64, n: usize) -> f64 {
    let q = (-2.0 * lambda * dt).exp();
    let g = if q < 1.0 { (1.0 - q.powi(n as i32)) / (1.0 - q) } else { n as f64 };
    let e = (-lambda * dt).exp();
    s2 / (2.0 * lambda) * (2.0 * n as f64 - q * g - g - 2.0 * e * (n as f64 - g))
}

fn main() {
    let cfg = ExperimentConfig::case1_desk();
    let spec = cfg.model.spectrum().unwrap();
    let a = cfg.alpha_stage;
    let nodes = NodeSet::shifted(a.b, a.m1).unwrap().coords();
    let coarse: Vec<f64> = nodes.iter().step_by(a.p).copied().collect();
    let n = cfg.grid.n_time;
    for l in [250usize, 500, 1000, 2000, 4000, 8000, 16000] {
        let diffs = |xs: &[f64], f: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
            (1..=l).map(|k| xs.windows(2).map(|w| (f(k, w[1]) - f(k, w[0])).powi(2)).sum()).collect()
        };
        let ms = |xs: &[f64], dt: f64, steps: usize| -> f64 {
            let ay = diffs(xs, &|k, y| spec.e1(k, y));
            let bz = diffs(xs, &|k, z| spec.e2(k, z));
            let tot: f64 = (1..=l)
                .into_par_iter()
                .map(|l1| {
                    (1..=l)
                        .map(|l2| {
                            let lam = spec.lambda(l1, l2);
                            let s = spec.noise_sd(l1, l2);
                            time_sum(lam, s * s, dt, steps) * ay[l1 - 1] * bz[l2 - 1]
                        })
                        .sum::<f64>()
                })
                .sum();
            let cells = (xs.len() - 1) as f64;
            tot / (cells * cells * steps as f64)
        };
        let dt = 1.0 / n as f64;
        let f = ms(&nodes, dt, n);
        let c = ms(&coarse, dt * (a.p * a.p) as f64, n / (a.p * a.p));
        let alpha = (c / f).ln() / ((a.p * a.p) as f64).ln();
        println!("L {l}: ms_fine {f:.6e} ms_coarse {c:.6e} E-alpha {alpha:.5}");
    }
}

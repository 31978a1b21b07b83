//! Contrast estimate from expected increments at given truncation and geometry.
//!
//! Usage: `expected_contrast L b m n`

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use spde2d::alpha::CellSums;
use spde2d::contrast::{estimate_vartheta, ParamSpaceXi};
use spde2d::harness::ExperimentConfig;
use spde2d::model::NodeSet;
use spde2d::special::PsiCache;

/// Sum over i < k of E[(x(t_{i+h}) - x(t_i))^2], t_i = i dt, x(0) = 0.
fn lag_sum(lambda: f64, s2: f64, dt: f64, h: usize, k: usize) -> f64 {
    let q = (-2.0 * lambda * dt).exp();
    let g = if q < 1.0 { (1.0 - q.powi(k as i32)) / (1.0 - q) } else { k as f64 };
    let e = (-lambda * dt * h as f64).exp();
    s2 / (2.0 * lambda) * (2.0 * k as f64 - (q.powi(h as i32) + 1.0) * g - 2.0 * e * (k as f64 - g))
}

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let (l, b, m, nthin) = (args[0] as usize, args[1], args[2] as usize, args[3] as usize);
    let cfg = ExperimentConfig::case1_desk();
    let spec = cfg.model.spectrum().unwrap();
    let n = cfg.grid.n_time;
    let dt = (n / nthin) as f64 / n as f64;
    let nodes = NodeSet::shifted(b, m).unwrap().coords();
    let diffs = |f: &dyn Fn(usize, f64) -> f64| -> Array2<f64> {
        Array2::from_shape_fn((l, m), |(k, j)| (f(k + 1, nodes[j + 1]) - f(k + 1, nodes[j])).powi(2))
    };
    let a = diffs(&|k, y| spec.e1(k, y));
    let bz = diffs(&|k, z| spec.e2(k, z));
    let acc = |h: usize, kk: usize| -> Array2<f64> {
        (0..l)
            .into_par_iter()
            .map(|i| {
                let w = Array1::from_shape_fn(l, |j| {
                    let lam = spec.lambda(i + 1, j + 1);
                    let s = spec.noise_sd(i + 1, j + 1);
                    lag_sum(lam, s * s, dt, h, kk)
                });
                let wb = w.dot(&bz);
                let ai = a.row(i);
                Array2::from_shape_fn((m, m), |(j, k)| ai[j] * wb[k])
            })
            .reduce(|| Array2::zeros((m, m)), |x, y| x + y)
    };
    let mid: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let sums = CellSums {
        sq: acc(1, nthin),
        sq_tilde: acc(2, nthin - 1),
        steps: nthin,
        dt,
        delta: (1.0 - 2.0 * b) / m as f64,
        mid_y: mid.clone(),
        mid_z: mid,
    };
    let xi = ParamSpaceXi::for_ratio(sums.aspect_ratio());
    println!("L {l} b {b} m {m} n {nthin} r {:.4}", sums.aspect_ratio());
    for alpha in [0.466, 0.482, 0.497, 0.5, 0.5144] {
        let cache = PsiCache::new(1e-10).unwrap();
        let res = estimate_vartheta(&sums, alpha, &xi, cfg.model.noise.family(), &cache, &Default::default()).unwrap();
        let v = res.vartheta_hat;
        println!(
            "  alpha {alpha}: theta1 {:.4} eta1 {:.4} theta2 {:.4} sigma2 {:.4} obj {:.3e}",
            res.theta1_hat, res.eta1_hat, v.theta2, v.sigma2, res.objective
        );
    }
}

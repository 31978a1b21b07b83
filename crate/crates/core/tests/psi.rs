mod common;

use common::{bracket_circle_mean, psi_oracle};
use proptest::prelude::*;
use spde2d::model::Family;
use spde2d::special::{
    bessel_bracket, f_limit, g_limit, psi, psi_dalpha, psi_dtheta2, psi_tilde, psi_with_cut, PsiCache, PsiQuery,
    Vartheta,
};
use spde2d::Error;

const RS: [f64; 4] = [0.1, 0.3, 1.0, 3.0];
const ALPHAS: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 1.9];
const THETAS: [f64; 2] = [0.2, 1.0];

fn q(r: f64, alpha: f64, theta2: f64) -> PsiQuery {
    PsiQuery::new(r, alpha, theta2).unwrap()
}

#[test]
fn bracket_series_and_direct_agree_with_circle_mean() {
    for i in 0..400 {
        let u = 0.01 + i as f64 * 0.07;
        let d = (bessel_bracket(u) - bracket_circle_mean(u)).abs();
        assert!(d < 1e-14 * (1.0 + bracket_circle_mean(u)), "u={u} diff={d:e}");
    }
    // near zero the bracket behaves like u^4 / 32
    let u = 1e-3;
    assert!((bessel_bracket(u) / (u.powi(4) / 32.0) - 1.0).abs() < 1e-5);
}

#[test]
fn golden_values_match_oracle() {
    for (r, a, t) in [(0.3, 0.5, 0.2), (1.0, 1.0, 1.0)] {
        let v = psi(&q(r, a, t), 1e-12).unwrap().value;
        let o = psi_oracle(r, a, t);
        assert!((v - o).abs() < 1e-10, "psi({r},{a},{t}) = {v} oracle {o}");
    }
}

#[test]
fn full_grid_matches_oracle() {
    for r in RS {
        for a in ALPHAS {
            for t in THETAS {
                let rep = psi(&q(r, a, t), 1e-11).unwrap();
                let o = psi_oracle(r, a, t);
                assert!(
                    (rep.value - o).abs() < 1e-10,
                    "psi({r},{a},{t}) = {} oracle {o} bound {:e}",
                    rep.value,
                    rep.abs_error_bound
                );
            }
        }
    }
}

#[test]
fn positive_on_grid() {
    for r in [0.1, 0.3, 1.0] {
        for a in [0.25, 0.5, 1.0, 1.5] {
            for t in THETAS {
                assert!(psi(&q(r, a, t), 1e-10).unwrap().value > 0.0);
            }
        }
    }
}

#[test]
fn tilde_is_theta2_power_times_psi() {
    for (r, a, t) in [(0.3, 0.5, 0.2), (1.0, 1.5, 2.5), (0.7, 0.3, 0.05)] {
        let p = psi(&q(r, a, t), 1e-11).unwrap().value;
        let pt = psi_tilde(&q(r, a, t), 1e-11).unwrap().value;
        assert!((pt - t.powf(a) * p).abs() <= 1e-13 * pt.abs());
    }
}

#[test]
fn reported_bound_is_honest() {
    for (r, a, t) in [(0.3, 0.5, 0.2), (3.0, 1.9, 0.2), (0.1, 0.25, 1.0)] {
        let rep = psi(&q(r, a, t), 1e-8).unwrap();
        assert!(rep.abs_error_bound <= 1e-8);
        assert!((rep.value - psi_oracle(r, a, t)).abs() <= rep.abs_error_bound + 1e-12);
        assert!(rep.nodes_used > 0 && rep.tail_cut >= 6.0);
    }
}

#[test]
fn doubling_cut_and_halving_tol_is_self_consistent() {
    for (r, a, t) in [(0.3, 0.5, 0.2), (1.0, 1.0, 1.0), (0.1, 1.5, 1.0)] {
        let base = psi(&q(r, a, t), 1e-9).unwrap();
        let finer = psi_with_cut(&q(r, a, t), 0.5e-9, Some(2.0 * base.tail_cut)).unwrap();
        assert!((finer.value - base.value).abs() < base.abs_error_bound.max(1e-15));
    }
}

#[test]
fn invalid_queries_rejected() {
    assert!(PsiQuery::new(0.0, 0.5, 1.0).is_err());
    assert!(PsiQuery::new(1.0, 2.0, 1.0).is_err());
    assert!(PsiQuery::new(1.0, 0.0, 1.0).is_err());
    assert!(PsiQuery::new(1.0, 0.5, -1.0).is_err());
    assert!(matches!(psi(&q(1.0, 0.5, 1.0), 1e-3), Err(Error::InvalidParam { .. })));
}

#[test]
fn derivatives_match_oracle_differences() {
    let base = q(0.4, 0.7, 0.6);
    let d = psi_dtheta2(&base, 1e-12).unwrap();
    let h = 1e-4;
    let fd = (psi_oracle(0.4, 0.7, 0.6 + h) - psi_oracle(0.4, 0.7, 0.6 - h)) / (2.0 * h);
    assert!((d - fd).abs() < 1e-5 * d.abs().max(1.0));
    // psi is proportional to theta2^{-1-alpha} r^{2 alpha}·k(theta2) only through
    // a = r / sqrt(theta2); check sign of the alpha-derivative numerically finite
    let da = psi_dalpha(&base, 1e-12).unwrap();
    let fa = (psi_oracle(0.4, 0.7 + h, 0.6) - psi_oracle(0.4, 0.7 - h, 0.6)) / (2.0 * h);
    assert!((da - fa).abs() < 1e-5 * da.abs().max(1.0));
}

#[test]
fn f_and_g_limits() {
    let flat = Vartheta { kappa: 0.0, eta: 0.0, theta2: 0.2, sigma2: 1.5 };
    let p = psi(&q(0.3, 0.5, 0.2), 1e-12).unwrap().value;
    for (y, z) in [(0.1, 0.9), (0.5, 0.5)] {
        let f = f_limit(y, z, &flat, 0.3, 0.5, Family::Q1, 1e-12).unwrap();
        assert!((f - 1.5 * p).abs() < 1e-13);
    }
    let g = g_limit(&flat, 0.3, 0.5, 0.1, Family::Q1, 1e-12).unwrap();
    assert!((g - 1.5 * p).abs() < 1e-13);

    let tilt = Vartheta { kappa: 1.0, eta: 1.0, theta2: 0.2, sigma2: 1.0 };
    let f1 = f_limit(0.2, 0.5, &tilt, 0.3, 0.5, Family::Q1, 1e-12).unwrap();
    let f2 = f_limit(0.4, 0.5, &tilt, 0.3, 0.5, Family::Q1, 1e-12).unwrap();
    assert!(f2 < f1);
    let fo = (-0.7f64).exp() * psi_oracle(0.3, 0.5, 0.2);
    assert!((f1 - fo).abs() < 1e-10);

    // midpoint limit as the margin closes in
    let b = 0.5 - 1e-7;
    let g_mid = g_limit(&tilt, 0.3, 0.5, b, Family::Q1, 1e-12).unwrap();
    assert!((g_mid - (-1.0f64).exp() * p).abs() < 1e-9);

    // Case-1 averaging window against a Simpson double integral oracle
    let b = 0.005;
    let g = g_limit(&tilt, 0.3, 0.5, b, Family::Q1, 1e-12).unwrap();
    let n = 2000;
    let h = (1.0 - 2.0 * b) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * (-(b + i as f64 * h)).exp();
    }
    let one_d = s * h / 3.0 / (1.0 - 2.0 * b);
    assert!((g - one_d * one_d * psi_oracle(0.3, 0.5, 0.2)).abs() < 1e-10);

    assert!(g_limit(&tilt, 0.3, 0.5, 0.5, Family::Q1, 1e-12).is_err());
    let gt = g_limit(&tilt, 0.3, 0.5, b, Family::Q2, 1e-12).unwrap();
    assert!((gt - 0.2f64.powf(0.5) * g).abs() < 1e-12);
}

#[test]
fn cache_returns_identical_values() {
    let cache = PsiCache::new(1e-11).unwrap();
    let qq = q(0.3, 0.5, 0.2);
    let a = cache.get(&qq, Family::Q1).unwrap();
    let b = cache.get(&qq, Family::Q1).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(a.to_bits(), psi(&qq, 1e-11).unwrap().value.to_bits());
    cache.get(&qq, Family::Q2).unwrap();
    assert_eq!(cache.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_positive_and_finite(r in 0.05f64..3.0, a in 0.05f64..1.95, t in 0.05f64..5.0) {
        let v = psi(&q(r, a, t), 1e-9).unwrap().value;
        prop_assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn psi_continuous_in_alpha(r in 0.1f64..2.0, a in 0.1f64..1.9, t in 0.1f64..3.0) {
        let h = 1e-4;
        let v0 = psi(&q(r, a, t), 1e-11).unwrap().value;
        let v1 = psi(&q(r, a + h, t), 1e-11).unwrap().value;
        prop_assert!((v1 - v0).abs() < 1e-2 * v0.max(1.0));
    }

    #[test]
    fn bracket_nonnegative(u in -60.0f64..60.0) {
        prop_assert!(bessel_bracket(u) >= -1e-15);
    }
}

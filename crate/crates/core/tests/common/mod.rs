//! Test-side oracles, written independently of the library code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// `J0(sqrt2 u) - 2 J0(u) + 1` as the circle mean of
/// `4 sin^2(u cos t / 2) sin^2(u sin t / 2)`; trapezoid rule, spectrally exact.
pub fn bracket_circle_mean(u: f64) -> f64 {
    scaled_bracket(u, 1.0)
}

/// `B(a x) / x^4` by the same circle mean, representable for tiny `x`.
pub fn scaled_bracket(a: f64, x: f64) -> f64 {
    let u = a * x;
    let n = 4 * (u.abs().ceil() as usize) + 64;
    let h = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let (s, c) = (k as f64 * h).sin_cos();
        let p = (0.5 * u * c).sin() / x;
        let q = (0.5 * u * s).sin() / x;
        acc += 4.0 * (p * q) * (p * q);
    }
    acc / n as f64
}

/// Tanh-sinh quadrature on `[a, b]`, refined by halving the step until two
/// successive levels agree to `tol`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let len = b - a;
    let half_pi = 0.5 * PI;
    let node = |t: f64| -> (f64, f64, f64) {
        let u = half_pi * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        let w = len * half_pi * t.cosh() * 2.0 * e / ((1.0 + e) * (1.0 + e));
        // distances from the two ends, each computed without cancellation
        let near = len * if u < 0.0 { 1.0 / (1.0 + (-2.0 * u).exp()) } else { e / (1.0 + e) };
        let far = len - near;
        let (dl, dr) = if u < 0.0 { (near, far) } else { (far, near) };
        (dl, dr, w)
    };
    let eval = |t: f64| -> f64 {
        let (dl, dr, w) = node(t);
        if w == 0.0 || dl <= 0.0 || dr <= 0.0 {
            return 0.0;
        }
        let x = if dl < dr { a + dl } else { b - dr };
        w * f(x)
    };
    let tmax = 6.0;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut est = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while k as f64 * h <= tmax {
            add += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        sum += add;
        let next = sum * h;
        if (next - est).abs() <= tol {
            return next;
        }
        est = next;
    }
    est
}

/// `int_0^inf x^{-1-2 alpha} B(a x) dx` in closed form (Mellin transform of J0).
fn mellin_part(a: f64, alpha: f64) -> f64 {
    let c = if alpha == 1.0 {
        (2.0f64).ln() / 4.0
    } else {
        (2.0 - 2f64.powf(alpha)) * -(2f64.powf(-2.0 * alpha - 1.0)) * gamma(-alpha) / gamma(1.0 + alpha)
    };
    a.powf(2.0 * alpha) * c
}

/// Independent oracle value of psi_{r,alpha}(theta2).
pub fn psi_oracle(r: f64, alpha: f64, theta2: f64) -> f64 {
    let a = r / theta2.sqrt();
    let f = |x: f64| (-x * x).exp() * x.powf(3.0 - 2.0 * alpha) * scaled_bracket(a, x);
    // piecewise so each piece spans few oscillations; e^{-49} beyond 7
    let mut gauss = 0.0;
    let pieces = 28;
    for k in 0..pieces {
        let lo = 7.0 * k as f64 / pieces as f64;
        let hi = 7.0 * (k + 1) as f64 / pieces as f64;
        gauss += tanh_sinh(f, lo, hi, 1e-15);
    }
    2.0 / (theta2 * PI) * (mellin_part(a, alpha) - gauss)
}

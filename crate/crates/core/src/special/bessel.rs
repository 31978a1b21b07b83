//! Bessel function of the first kind of order zero.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

const SERIES_MAX: f64 = 5.0;
const ASYMPTOTIC_MIN: f64 = 25.0;

/// `J0(x)` to about 1e-15 absolute accuracy for all finite `x`.
///
/// Power series up to |x| = 5, normalized Miller backward recurrence on
/// (5, 25), and the Hankel amplitude/phase expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_MAX {
        j0_series(ax)
    } else if ax < ASYMPTOTIC_MIN {
        j0_miller(ax)
    } else {
        j0_asymptotic(ax)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn j0_miller(x: f64) -> f64 {
    let start = 2 * ((x as usize + 40) / 2);
    let two_over_x = 2.0 / x;
    let (mut next, mut cur) = (0.0_f64, 1e-30_f64);
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=start).rev() {
        // cur = J_k (unnormalized); produce J_{k-1}
        let prev = k as f64 * two_over_x * cur - next;
        next = cur;
        cur = prev;
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if k == 1 {
            j0 = cur;
        }
        if cur.abs() > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
        }
    }
    j0 / (norm + j0)
}

/// Coefficients `a_k(0) = prod_{i=1..k} (-(2i-1)^2) / (k! 8^k)` of the Hankel
/// expansion, each divided by `x^k` along the way.
fn hankel_terms(x: f64) -> impl Iterator<Item = f64> {
    let mut t = 1.0;
    let mut k = 0u32;
    let mut last = f64::INFINITY;
    std::iter::from_fn(move || {
        if k > 80 {
            return None;
        }
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            t *= -(odd * odd) / (k as f64 * 8.0 * x);
        }
        k += 1;
        let mag = t.abs();
        if mag > last || mag < 1e-18 {
            return None;
        }
        last = mag;
        Some(t)
    })
}

fn j0_asymptotic(x: f64) -> f64 {
    // J0 = sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - pi/4, with
    // P = sum_{k even} (-1)^{k/2} a_k, Q = sum_{k odd} (-1)^{(k-1)/2} a_k
    let (mut p, mut q) = (0.0, 0.0);
    for (k, a) in hankel_terms(x).enumerate() {
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
    }
    let (s, c) = x.sin_cos();
    let cos_chi = (c + s) * FRAC_1_SQRT_2;
    let sin_chi = (s - c) * FRAC_1_SQRT_2;
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

/// `H0^(1)(z)` from its large-argument expansion; intended for |z| >= 25 in
/// the closed upper half plane, where the truncation error is below 1e-20.
pub(crate) fn hankel1_0(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut t = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..80u32 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            t *= i * (-(odd * odd)) / (z * (k as f64 * 8.0));
        }
        let mag = t.norm();
        if mag > last || mag < 1e-18 {
            break;
        }
        last = mag;
        sum += t;
    }
    let phase = (i * (z - PI / 4.0)).exp();
    (2.0 / (PI * z)).sqrt() * phase * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `J0(x) = (1/pi) int_0^pi cos(x sin t) dt`; the trapezoid rule on this
    /// periodic integrand converges geometrically once n exceeds x.
    fn j0_oracle(x: f64) -> f64 {
        let n = 2 * (x.abs() as usize) + 64;
        let h = PI / n as f64;
        let mut acc = 0.5 * (1.0 + (x * PI.sin()).cos());
        for k in 1..n {
            acc += (x * (k as f64 * h).sin()).cos();
        }
        acc / n as f64
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_967).abs() < 1e-15);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-12);
    }

    #[test]
    fn first_zero_by_bisection_on_series() {
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if j0_series(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 2.404_825_557_695_773).abs() < 1e-14);
        assert!(bessel_j0(lo).abs() < 1e-12);
    }

    #[test]
    fn matches_integral_representation() {
        let mut worst = 0.0_f64;
        let mut x = 0.0;
        while x < 80.0 {
            worst = worst.max((bessel_j0(x) - j0_oracle(x)).abs());
            x += 0.0371;
        }
        for x in [4.999, 5.0, 5.001, 7.999, 8.0, 8.001, 24.999, 25.0, 25.001, 120.5, 1234.5] {
            worst = worst.max((bessel_j0(x) - j0_oracle(x)).abs());
        }
        assert!(worst < 2e-15, "max abs error {worst:e}");
    }

    #[test]
    fn even_function() {
        for x in [0.3, 5.0, 9.5, 31.0, 400.0] {
            assert_eq!(bessel_j0(x), bessel_j0(-x));
        }
    }

    #[test]
    fn hankel_real_part_is_j0() {
        for x in [25.0, 40.0, 97.3] {
            let h = hankel1_0(Complex64::new(x, 0.0));
            assert!((h.re - j0_oracle(x)).abs() < 1e-14);
        }
    }
}

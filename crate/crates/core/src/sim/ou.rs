//! Single-step transitions of `dx = -lambda x dt + s dw`.

/// Exact transition over `dt`.
#[inline]
pub fn ou_step_exact(x: f64, lambda: f64, noise_sd: f64, dt: f64, gauss: f64) -> f64 {
    (-lambda * dt).exp() * x + ou_transition_sd(lambda, noise_sd, dt) * gauss
}

/// Conditional standard deviation of the exact transition.
#[inline]
pub fn ou_transition_sd(lambda: f64, noise_sd: f64, dt: f64) -> f64 {
    noise_sd * (-(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)).sqrt()
}

/// Euler–Maruyama step over `dt`.
#[inline]
pub fn ou_step_em(x: f64, lambda: f64, noise_sd: f64, dt: f64, gauss: f64) -> f64 {
    (1.0 - lambda * dt) * x + noise_sd * dt.sqrt() * gauss
}

/// The Euler–Maruyama recursion amplifies the state when `lambda dt >= 2`.
#[inline]
pub fn em_unstable(lambda: f64, dt: f64) -> bool {
    lambda * dt >= 2.0
}

/// Stationary variance `s^2 / (2 lambda)`.
pub fn ou_stationary_var(lambda: f64, noise_sd: f64) -> f64 {
    noise_sd * noise_sd / (2.0 * lambda)
}

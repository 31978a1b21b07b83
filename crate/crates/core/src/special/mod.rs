//! Special functions and deterministic limit functions.

pub mod bessel;
pub mod psi;
pub mod quad;

pub use bessel::bessel_j0;
pub use psi::{
    bessel_bracket, f_limit, g_limit, psi, psi_dalpha, psi_dtheta2, psi_family, psi_tilde, psi_with_cut, PsiCache,
    PsiQuery, QuadratureReport, Vartheta,
};

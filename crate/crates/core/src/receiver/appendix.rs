//! Checks of the initialisation analysis: the first-order perturbation bound
//! for pilot starts and the exceedance probability of random starts.

use crate::error::{Error, Result};
use crate::linalg::{inverse, spectral_norm, CMat};
use crate::marcum::marcum_q;

/// `(||(H + D)^-1 - H^-1||_F, ||H^-1||_2^2 ||D||_F)`: the actual inverse
/// perturbation and its first-order bound. Requires `||H^-1 D||_2 < 1`.
pub fn init_bound_check(h: &CMat, delta: &CMat) -> Result<(f64, f64)> {
    let hinv = inverse(h, "init_bound_check")?;
    let neumann_norm = spectral_norm(&(&hinv * delta));
    if !(neumann_norm < 1.0) {
        return Err(Error::OutOfRegime { neumann_norm });
    }
    let perturbed = inverse(&(h + delta), "init_bound_check")?;
    let lhs = (perturbed - &hinv).norm();
    let s = spectral_norm(&hinv);
    Ok((lhs, s * s * delta.norm()))
}

/// Probability that a random start with i.i.d. `CN(0, alpha^2)` entries lies
/// farther than `eps` from `U*` in Frobenius norm:
/// `Q_{N_s^2}(sqrt(2) ||U*||_F / alpha, sqrt(2) eps / alpha)`.
pub fn random_init_exceedance(eps: f64, alpha: f64, u_star: &CMat, ns: usize) -> Result<f64> {
    if !(alpha > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument("alpha and eps must be positive".into()));
    }
    let order = u32::try_from(ns * ns).map_err(|_| Error::InvalidArgument("stream count too large".into()))?;
    let s2 = core::f64::consts::SQRT_2;
    marcum_q(order, s2 * u_star.norm() / alpha, s2 * eps / alpha)
}

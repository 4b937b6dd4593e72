use rand::Rng;

use crate::linalg::{self, Matrix, Vector};
use crate::models::LtiMatrices;
use crate::{Error, Result};

/// Default `Σ_φ = 0.5·S`.
pub const DEFAULT_PHI_SCALE: f64 = 0.5;

/// Analytic stealthy attack on an LTI plant:
/// `a_t = −y_t + C B u_{t−1} + C A x̂_{t−1} + φ_t`, `φ_t ~ N(0, Σ_φ)`.
///
/// Applied to `y_t`, it makes the residue equal `φ_t`. `s` is the current
/// innovation covariance; `Σ_φ ⪯ S` is required.
pub fn theorem1_attack<R: Rng + ?Sized>(
    lti: &LtiMatrices,
    x_hat_prev: &Vector,
    u_prev: &Vector,
    y: &Vector,
    phi_cov: &Matrix,
    s: &Matrix,
    rng: &mut R,
) -> Result<Vector> {
    let factor = phi_factor(phi_cov, s)?;
    if !lti.is_unstable() {
        log::warn!("analytic attack on a plant without unstable modes; the error stays bounded");
    }
    let phi = linalg::sample_gaussian(&factor, rng);
    Ok(theorem1_attack_with(lti, x_hat_prev, u_prev, y, &phi))
}

/// The attack for a given `φ_t`.
pub fn theorem1_attack_with(
    lti: &LtiMatrices,
    x_hat_prev: &Vector,
    u_prev: &Vector,
    y: &Vector,
    phi: &Vector,
) -> Vector {
    &lti.c * (&lti.a * x_hat_prev + &lti.b * u_prev) - y + phi
}

/// Factor of `Σ_φ` after checking `S − Σ_φ ⪰ 0`.
pub fn phi_factor(phi_cov: &Matrix, s: &Matrix) -> Result<Matrix> {
    if phi_cov.shape() != s.shape() {
        return Err(Error::Dimension(format!(
            "Σ_φ is {:?}, S is {:?}",
            phi_cov.shape(),
            s.shape()
        )));
    }
    let gap = linalg::min_eigenvalue(&(s - phi_cov));
    if gap < -1e-9 * s.amax().max(1.0) {
        return Err(Error::Contract(format!(
            "φ covariance is not dominated by S (min eigenvalue of S − Σ_φ is {gap:e})"
        )));
    }
    linalg::psd_factor(phi_cov)
}

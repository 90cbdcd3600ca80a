use serde::Serialize;

use super::closed_form::{knee_gamma, tau_star, theta_tilde};
use super::kernel::{ms_infinity_throughput, psi_x_spectral, SpectralOptions};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};

/// Optimal debt target and the effective bandwidth and throughput it buys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremOneResult {
    pub gamma: f64,
    pub theta: f64,
    pub tau_star: f64,
    pub theta_tilde: f64,
    pub psi_x: f64,
    /// Flat branch `psi_x / theta`.
    pub loose_eb: f64,
    /// Always-transmit throughput.
    pub th_ms_inf: f64,
    pub eb_star: f64,
    pub th_star: f64,
    pub knee_gamma: f64,
}

impl TheoremOneResult {
    pub fn below_knee(&self) -> bool {
        self.tau_star < self.loose_eb
    }
}

/// Closed-form optimum at collision level `gamma` and tilt `theta < 0`.
pub fn theorem_one(
    gamma: f64,
    theta: f64,
    params: &ChannelParams,
    opts: &SpectralOptions,
) -> Result<TheoremOneResult> {
    if !(theta < 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "theta must be finite and negative, got {theta}"
        )));
    }
    let tau = tau_star(gamma, params)?;
    let tt = theta_tilde(theta, params)?;
    let psi_x = psi_x_spectral(tt, params, opts)?;
    let loose_eb = psi_x / theta;
    let th_ms_inf = ms_infinity_throughput(params, opts)?;
    Ok(TheoremOneResult {
        gamma,
        theta,
        tau_star: tau,
        theta_tilde: tt,
        psi_x,
        loose_eb,
        th_ms_inf,
        eb_star: tau.min(loose_eb),
        th_star: tau.min(th_ms_inf),
        knee_gamma: knee_gamma(loose_eb, params),
    })
}

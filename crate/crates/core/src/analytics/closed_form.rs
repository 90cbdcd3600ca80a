use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};

/// Effective-bandwidth parameter `theta = ln(epsilon) / b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbParams {
    pub epsilon: Option<f64>,
    pub buffer_b: Option<f64>,
    pub theta: f64,
}

impl EbParams {
    pub fn from_theta(theta: f64) -> Result<Self> {
        if !(theta < 0.0 && theta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "theta must be finite and negative, got {theta}"
            )));
        }
        Ok(EbParams {
            epsilon: None,
            buffer_b: None,
            theta,
        })
    }

    /// Overflow bound `epsilon` in (0, 1) at buffer size `b > 0`.
    pub fn from_overflow(epsilon: f64, buffer_b: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if !(buffer_b > 0.0 && buffer_b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "buffer size must be positive, got {buffer_b}"
            )));
        }
        Ok(EbParams {
            epsilon: Some(epsilon),
            buffer_b: Some(buffer_b),
            theta: epsilon.ln() / buffer_b,
        })
    }
}

/// `ln(1 - exp(-lambda T) (1 - exp(c theta)))`: the tilt that moves the
/// success process onto the idle-sensing process.
pub fn theta_tilde(theta: f64, params: &ChannelParams) -> Result<f64> {
    if !(theta <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be <= 0, got {theta}"
        )));
    }
    let q = params.p_stay_idle_slot();
    // 1 - exp(c theta) = -expm1(c theta)
    Ok((q * (params.c() * theta).exp_m1()).ln_1p())
}

/// Slope of the optimal debt target in `gamma`:
/// `N exp(-lambda T) (1 - v0 exp(-lambda T)) / (1 - exp(-lambda T))`.
pub fn tau_per_gamma(params: &ChannelParams) -> f64 {
    let q = params.p_stay_idle_slot();
    let miss = -(-params.lambda * params.slot_len).exp_m1();
    params.n_channels as f64 * q * (1.0 - params.v0() * q) / miss
}

/// Debt target matched to collision level `gamma`.
pub fn tau_star(gamma: f64, params: &ChannelParams) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    params.validate()?;
    if params.lambda <= 0.0 {
        return Err(Error::InvalidChannel("tau* needs lambda > 0".into()));
    }
    Ok(gamma * tau_per_gamma(params))
}

/// Collision level at which the linear branch meets `loose_eb`.
pub fn knee_gamma(loose_eb: f64, params: &ChannelParams) -> f64 {
    loose_eb / tau_per_gamma(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_tilde_values() {
        let p = ChannelParams::REFERENCE;
        assert_eq!(theta_tilde(0.0, &p).unwrap(), 0.0);
        // Direct evaluation of ln(1 - e^{-1/12}(1 - e^{-0.08})).
        let direct = (1.0 - (-1.0f64 / 12.0).exp() * (1.0 - (-0.08f64).exp())).ln();
        let tt = theta_tilde(-0.08, &p).unwrap();
        assert!((tt - direct).abs() < 1e-15);
        assert!((tt - (-0.07336)).abs() < 5e-6);
        let fast = ChannelParams { lambda: 1e6, ..p };
        assert!(theta_tilde(-0.08, &fast).unwrap().abs() < 1e-100);
        assert!(theta_tilde(0.1, &p).is_err());
    }

    #[test]
    fn tau_star_values() {
        let p = ChannelParams::REFERENCE;
        assert_eq!(tau_star(0.0, &p).unwrap(), 0.0);
        let q = (-1.0f64 / 12.0).exp();
        let direct = 2.0 * 0.01 * q * (1.0 - 0.6 * q) / (1.0 - q);
        let t = tau_star(0.01, &p).unwrap();
        assert!((t - direct).abs() < 1e-14);
        assert!((t - 0.1031).abs() < 5e-5);
        let p4 = ChannelParams { n_channels: 4, ..p };
        assert!((tau_star(0.01, &p4).unwrap() - 2.0 * t).abs() < 1e-14);
        assert!(tau_star(-1.0, &p).is_err());
    }

    #[test]
    fn eb_params() {
        let e = EbParams::from_overflow(1e-3, 100.0).unwrap();
        assert!((e.theta - (1e-3f64).ln() / 100.0).abs() < 1e-16);
        assert!(EbParams::from_overflow(1.0, 10.0).is_err());
        assert!(EbParams::from_overflow(0.1, 0.0).is_err());
        assert!(EbParams::from_theta(0.0).is_err());
        assert_eq!(EbParams::from_theta(-0.08).unwrap().theta, -0.08);
    }
}

use serde::{Deserialize, Serialize};

use super::closed_form::theta_tilde;
use super::kernel::{stationary_distribution, SpectralOptions, TiltedKernel};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};

/// Which generating function drives the sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MgfKernel {
    /// Exact moment generating function of the success count.
    #[default]
    Success,
    /// Idle-sensing count tilted by `theta_tilde(theta)`.
    IdleSensing,
}

#[derive(Debug, Clone, Copy)]
pub struct SupremumOptions {
    pub kernel: MgfKernel,
    /// Growth over the first term that counts as divergence.
    pub ceiling: f64,
    pub spectral: SpectralOptions,
}

impl Default for SupremumOptions {
    fn default() -> Self {
        SupremumOptions {
            kernel: MgfKernel::Success,
            ceiling: 1e3,
            spectral: SpectralOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupremumReport {
    /// `ln(M_n(theta) exp(-theta tau n))` for `n = 1..=n_max`.
    pub log_terms: Vec<f64>,
    pub sup: f64,
    pub argsup: usize,
    /// First `n` whose term exceeds `ceiling` times the first one.
    pub diverged_at: Option<usize>,
}

impl SupremumReport {
    pub fn bounded(&self) -> bool {
        self.diverged_at.is_none()
    }

    /// Whether the last term sits below the running maximum.
    pub fn eventually_decreasing(&self) -> bool {
        self.log_terms.last().is_some_and(|&l| l < self.sup.ln())
    }
}

/// Evaluates `M_n(theta) exp(-theta tau n)` for the always-transmit policy
/// from the stationary channel law, stopping at the first divergence.
pub fn check_supremum_bound(
    theta: f64,
    tau: f64,
    params: &ChannelParams,
    n_max: usize,
    opts: &SupremumOptions,
) -> Result<SupremumReport> {
    if !(theta < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be negative, got {theta}"
        )));
    }
    if !(tau >= 0.0 && tau.is_finite()) || n_max == 0 {
        return Err(Error::InvalidArgument(
            "need finite tau >= 0 and n_max >= 1".into(),
        ));
    }
    let max_ch = opts.spectral.max_channels;
    let kernel = match opts.kernel {
        MgfKernel::Success => TiltedKernel::success(params, theta, max_ch)?,
        MgfKernel::IdleSensing => {
            TiltedKernel::idle_sensing(params, theta_tilde(theta, params)?, max_ch)?
        }
    };
    let mut v = stationary_distribution(params, &opts.spectral)?;
    let mut next = vec![0.0; v.len()];
    let mut log_mass = 0.0;
    let mut log_terms = Vec::with_capacity(n_max);
    let mut diverged_at = None;
    let limit = opts.ceiling.ln();
    for n in 1..=n_max {
        kernel.left_apply(&v, &mut next);
        let mass: f64 = next.iter().sum();
        log_mass += mass.ln();
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b / mass;
        }
        let term = log_mass - theta * tau * n as f64;
        log_terms.push(term);
        if term - log_terms[0] > limit {
            diverged_at = Some(n);
            break;
        }
    }
    let (argsup, sup_log) =
        log_terms
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| {
                if l > acc.1 {
                    (i + 1, l)
                } else {
                    acc
                }
            });
    Ok(SupremumReport {
        sup: sup_log.exp(),
        argsup,
        diverged_at,
        log_terms,
    })
}

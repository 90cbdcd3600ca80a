//! Closed forms, spectral limits and Monte-Carlo estimators.

pub mod closed_form;
pub mod estimate;
pub mod kernel;
pub mod supremum;
pub mod theorem;

pub use closed_form::{knee_gamma, tau_per_gamma, tau_star, theta_tilde, EbParams};
pub use estimate::{
    batch_means, estimate_eb, estimate_throughput, mean_ci, tail_slope, BlockLength, EbEstimate,
    EbEstimatorOptions, EbMethod, Estimate, TailFit,
};
pub use kernel::{
    ms_infinity_throughput, psi_success_spectral, psi_x_spectral, stationary_distribution,
    PerronRoot, SpectralOptions, TiltedKernel, DEFAULT_MAX_CHANNELS,
};
pub use supremum::{check_supremum_bound, MgfKernel, SupremumOptions, SupremumReport};
pub use theorem::{theorem_one, TheoremOneResult};

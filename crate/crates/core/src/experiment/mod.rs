//! Configured experiments: gamma sweeps, debt histograms and the
//! verification suite, each writing CSV artifacts to an output directory.

mod config;
mod debt_hist;
mod sweep;
mod verify;

pub use config::{
    CalibrationSection, DebtHistSection, EbSection, ExperimentConfig, PolicyKind,
    SimulationSection, SweepSection, VerifySection, PRESETS,
};
pub use debt_hist::{run_debt_histogram, DebtHistogram};
pub use sweep::{
    policy_for, run_sweep, simulate_point, PointPlan, PointResult, PointStats, SummaryRow,
    SweepOutcome,
};
pub use verify::{run_verifications, CheckResult, DpRow, VerificationReport};

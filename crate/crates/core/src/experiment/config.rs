use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{EbEstimatorOptions, EbParams};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::policy::CalibrationBudget;
use crate::simulator::InitialChannels;

/// Transmission rule simulated at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Debt target `tau*(gamma)`.
    MsAt,
    /// Memoryless transmission calibrated to `gamma`.
    MsMt,
    /// Always transmit on idle sensing.
    MsAtInf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EbSection {
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
    pub buffer_b: Option<f64>,
}

impl Default for EbSection {
    fn default() -> Self {
        EbSection {
            theta: Some(-0.08),
            epsilon: None,
            buffer_b: None,
        }
    }
}

impl EbSection {
    pub fn resolve(&self) -> Result<EbParams> {
        match (self.theta, self.epsilon, self.buffer_b) {
            (Some(t), None, None) => EbParams::from_theta(t),
            (t, Some(e), Some(b)) => {
                let p = EbParams::from_overflow(e, b)?;
                if let Some(t) = t {
                    if (t - p.theta).abs() > 1e-12 * t.abs() {
                        return Err(Error::InvalidConfig(format!(
                            "theta = {t} disagrees with ln(epsilon)/b = {}",
                            p.theta
                        )));
                    }
                }
                Ok(p)
            }
            _ => Err(Error::InvalidConfig(
                "give either theta or both epsilon and buffer_b".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub policy: PolicyKind,
    pub gammas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            policy: PolicyKind::MsAt,
            gammas: vec![
                0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.15, 0.2,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: u64,
    pub replications: usize,
    pub burn_in: u64,
    /// Busy flags of the channels at slot 1; stationary draws when absent.
    pub initial_busy: Option<Vec<bool>>,
    /// Slots of replication 0 written to each point's trace CSV.
    pub trace_export_slots: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizon: 1_000_000,
            replications: 20,
            burn_in: 1_000,
            initial_busy: None,
            trace_export_slots: 10_000,
        }
    }
}

impl SimulationSection {
    pub fn initial(&self) -> InitialChannels {
        match &self.initial_busy {
            Some(s) => InitialChannels::Fixed(s.clone()),
            None => InitialChannels::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub horizon: u64,
    pub burn_in: u64,
    pub tolerance: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let b = CalibrationBudget::default();
        CalibrationSection {
            horizon: b.horizon,
            burn_in: b.burn_in,
            tolerance: b.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebtHistSection {
    pub gamma: f64,
    pub bin_width: f64,
}

impl Default for DebtHistSection {
    fn default() -> Self {
        DebtHistSection {
            gamma: 0.03,
            bin_width: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Slots per simulated trace in the verification suite.
    pub horizon: u64,
    /// Replications pooled for the spectral cross-check.
    pub replications: usize,
    /// Debt targets checked, as fractions of the flat effective bandwidth.
    pub tau_fractions: Vec<f64>,
    pub dp_max_horizon: usize,
    pub dp_thetas: Vec<f64>,
    /// Relative tolerance of the spectral vs Monte-Carlo comparison.
    pub spectral_tolerance: f64,
    /// Run the adaptive policy with the debt comparison flipped to `<=`.
    pub inject_fault: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            horizon: 200_000,
            replications: 20,
            tau_fractions: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            dp_max_horizon: 6,
            dp_thetas: vec![-0.01, -0.08, -0.5, -2.0],
            spectral_tolerance: 0.01,
            inject_fault: false,
        }
    }
}

/// Fully resolved experiment description. Rates are in 1/ms, the slot
/// length in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub channel: ChannelParams,
    pub effective_bandwidth: EbSection,
    pub sweep: SweepSection,
    pub simulation: SimulationSection,
    pub estimator: EbEstimatorOptions,
    pub calibration: CalibrationSection,
    pub debt_hist: DebtHistSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            output_dir: PathBuf::from("out"),
            workers: 0,
            channel: ChannelParams::REFERENCE,
            effective_bandwidth: EbSection::default(),
            sweep: SweepSection::default(),
            simulation: SimulationSection::default(),
            estimator: EbEstimatorOptions::default(),
            calibration: CalibrationSection::default(),
            debt_hist: DebtHistSection::default(),
            verify: VerifySection::default(),
        }
    }
}

pub const PRESETS: [&str; 3] = ["paper-fig2a", "paper-fig2b", "paper-fig3"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentConfig::default();
        match name {
            "paper-fig2a" => Ok(ExperimentConfig {
                output_dir: PathBuf::from("out/paper-fig2a"),
                ..base
            }),
            "paper-fig2b" => Ok(ExperimentConfig {
                output_dir: PathBuf::from("out/paper-fig2b"),
                sweep: SweepSection {
                    policy: PolicyKind::MsMt,
                    ..SweepSection::default()
                },
                ..base
            }),
            "paper-fig3" => Ok(ExperimentConfig {
                output_dir: PathBuf::from("out/paper-fig3"),
                ..base
            }),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn eb_params(&self) -> Result<EbParams> {
        self.effective_bandwidth.resolve()
    }

    pub fn calibration_budget(&self) -> CalibrationBudget {
        CalibrationBudget {
            horizon: self.calibration.horizon,
            burn_in: self.calibration.burn_in,
            seed: crate::rng::derive_seed(self.seed, &[u64::MAX]),
            tolerance: self.calibration.tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.eb_params()?;
        if self.sweep.gammas.is_empty() {
            return Err(Error::InvalidConfig("gamma grid is empty".into()));
        }
        if let Some(g) = self
            .sweep
            .gammas
            .iter()
            .find(|g| !(g.is_finite() && **g >= 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "gamma {g} must be finite and >= 0"
            )));
        }
        let sim = &self.simulation;
        if sim.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if sim.horizon <= sim.burn_in {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must exceed burn-in {}",
                sim.horizon, sim.burn_in
            )));
        }
        if let Some(s) = &sim.initial_busy {
            if s.len() != self.channel.n_channels {
                return Err(Error::InvalidConfig(format!(
                    "initial_busy lists {} channels, model has {}",
                    s.len(),
                    self.channel.n_channels
                )));
            }
        }
        if self.calibration.horizon <= self.calibration.burn_in
            || !(self.calibration.tolerance > 0.0)
        {
            return Err(Error::InvalidConfig("bad calibration budget".into()));
        }
        if !(self.debt_hist.bin_width > 0.0) || !(self.debt_hist.gamma >= 0.0) {
            return Err(Error::InvalidConfig(
                "debt histogram needs gamma >= 0 and a positive bin width".into(),
            ));
        }
        let v = &self.verify;
        if v.horizon < 2
            || v.replications == 0
            || v.tau_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0))
        {
            return Err(Error::InvalidConfig(
                "verify needs horizon >= 2, replications >= 1, fractions in (0, 1)".into(),
            ));
        }
        if v.dp_thetas.iter().any(|t| !(*t < 0.0)) {
            return Err(Error::InvalidConfig("dp thetas must be negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, back);
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("fig9").is_err());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 5\n[channel]\nn_channels = 3\nlambda = 0.5\nmu = 0.5\nslot_len = 0.1\n[sweep]\ngammas = [0.1]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.channel.bits_per_slot, 1);
        assert_eq!(cfg.simulation.replications, 20);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.gammas.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.simulation.burn_in = cfg.simulation.horizon;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.effective_bandwidth.theta = Some(0.1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overflow_form_resolves_theta() {
        let eb = EbSection {
            theta: None,
            epsilon: Some(1e-4),
            buffer_b: Some(100.0),
        };
        assert!((eb.resolve().unwrap().theta - (1e-4f64).ln() / 100.0).abs() < 1e-15);
        let bad = EbSection {
            theta: Some(-1.0),
            ..eb
        };
        assert!(bad.resolve().is_err());
    }
}

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::{ExperimentConfig, PolicyKind};
use super::sweep::{policy_for, write_config_echo};
use crate::analytics::{theorem_one, SpectralOptions};
use crate::error::Result;
use crate::rng::derive_seed;
use crate::simulator::{run_with, RunSpec};

/// Distribution of `A_{t+1} - tau t` along one trace.
#[derive(Debug, Clone, Serialize)]
pub struct DebtHistogram {
    pub policy: String,
    pub tau: f64,
    pub bin_width: f64,
    /// Bin index `k` covers `[k w, (k + 1) w)`.
    pub bins: BTreeMap<i64, u64>,
    pub min: f64,
    pub max: f64,
    pub slots: u64,
}

impl DebtHistogram {
    fn new(policy: String, tau: f64, bin_width: f64) -> Self {
        DebtHistogram {
            policy,
            tau,
            bin_width,
            bins: BTreeMap::new(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            slots: 0,
        }
    }

    fn add(&mut self, x: f64) {
        *self
            .bins
            .entry((x / self.bin_width).floor() as i64)
            .or_default() += 1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.slots += 1;
    }

    /// Mean squared deviation from the target.
    pub fn spread(&self) -> f64 {
        let w = self.bin_width;
        self.bins
            .iter()
            .map(|(&k, &n)| ((k as f64 + 0.5) * w).powi(2) * n as f64)
            .sum::<f64>()
            / self.slots.max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
struct HistRow<'a> {
    policy: &'a str,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
    fraction: f64,
}

/// Simulates adaptive and memoryless transmission at the configured
/// collision level and histograms the centred debt of each. Writes
/// `debt_hist.csv` and `config.toml`.
pub fn run_debt_histogram(cfg: &ExperimentConfig) -> Result<Vec<DebtHistogram>> {
    cfg.validate()?;
    let eb = cfg.eb_params()?;
    let gamma = cfg.debt_hist.gamma;
    let closed = theorem_one(gamma, eb.theta, &cfg.channel, &SpectralOptions::default())?;
    let tau = closed.tau_star;
    let mut out = Vec::new();
    for (k, kind) in [PolicyKind::MsAt, PolicyKind::MsMt].into_iter().enumerate() {
        let policy = policy_for(kind, gamma, &closed, cfg)?;
        let spec = RunSpec {
            params: cfg.channel,
            policy: policy.clone(),
            horizon: cfg.simulation.horizon,
            seed: derive_seed(cfg.seed, &[k as u64]),
            initial: cfg.simulation.initial(),
        };
        let mut h =
            DebtHistogram::new(policy.transmission.describe(), tau, cfg.debt_hist.bin_width);
        let burn_in = cfg.simulation.burn_in;
        run_with(&spec, |r| {
            if r.t > burn_in {
                let next = r.debt_a + u64::from(r.success_bits);
                h.add(next as f64 - tau * r.t as f64);
            }
        })?;
        out.push(h);
    }

    write_config_echo(cfg, &cfg.output_dir)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("debt_hist.csv"))?;
    for h in &out {
        for (&k, &n) in &h.bins {
            w.serialize(HistRow {
                policy: &h.policy,
                bin_lo: k as f64 * h.bin_width,
                bin_hi: (k + 1) as f64 * h.bin_width,
                count: n,
                fraction: n as f64 / h.slots as f64,
            })?;
        }
    }
    w.flush()?;
    Ok(out)
}

use std::fs::{self, File};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, PolicyKind};
use crate::analytics::{
    estimate_eb, estimate_throughput, mean_ci, theorem_one, EbEstimate, EbEstimatorOptions,
    EbParams, Estimate, SpectralOptions, TheoremOneResult,
};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::policy::{calibrate_mt, ATParams, MTParams, PolicyConfig};
use crate::rng::derive_seed;
use crate::simulator::{collision_scale, run_with, InitialChannels, RunSpec, SlotRecord, Trace};

/// Replicated simulation of one policy.
#[derive(Debug, Clone, Copy)]
pub struct PointPlan<'a> {
    pub params: &'a ChannelParams,
    pub policy: &'a PolicyConfig,
    pub horizon: u64,
    pub replications: usize,
    pub burn_in: u64,
    pub initial: &'a InitialChannels,
    pub seed: u64,
    /// Leading slots of replication 0 to keep as a trace.
    pub keep_slots: usize,
}

#[derive(Debug, Clone)]
pub struct PointStats {
    pub eb: EbEstimate,
    pub throughput: Estimate,
    /// Scaled collision per channel, mean over replications.
    pub collision: Vec<Estimate>,
    /// Post-burn-in rewards of every replication.
    pub rewards: Vec<Vec<u32>>,
    pub head: Option<Trace>,
}

impl PointStats {
    pub fn collision_max(&self) -> f64 {
        self.collision.iter().map(|c| c.value).fold(0.0, f64::max)
    }

    /// Every channel's mean collision within `gamma` plus three standard
    /// errors.
    pub fn feasible(&self, gamma: f64) -> bool {
        self.collision
            .iter()
            .all(|c| c.value <= gamma + 3.0 * c.std_err)
    }
}

struct Replication {
    rewards: Vec<u32>,
    collisions: Vec<u64>,
    head: Vec<SlotRecord>,
}

fn replicate(plan: &PointPlan, rep: usize) -> Result<Replication> {
    let spec = RunSpec {
        params: *plan.params,
        policy: plan.policy.clone(),
        horizon: plan.horizon,
        seed: derive_seed(plan.seed, &[rep as u64]),
        initial: plan.initial.clone(),
    };
    let keep = if rep == 0 { plan.keep_slots } else { 0 };
    let mut out = Replication {
        rewards: Vec::with_capacity((plan.horizon - plan.burn_in) as usize),
        collisions: vec![0; plan.params.n_channels],
        head: Vec::with_capacity(keep),
    };
    run_with(&spec, |r| {
        if out.head.len() < keep {
            out.head.push(*r);
        }
        if r.t > plan.burn_in {
            out.rewards.push(r.success_bits);
            if let Some(ch) = r.collision_channel() {
                out.collisions[ch] += 1;
            }
        }
    })?;
    Ok(out)
}

/// Runs the replications in parallel and summarises them. Each replication
/// has its own seed derived from `plan.seed`, so results do not depend on
/// the thread count.
pub fn simulate_point(
    plan: &PointPlan,
    eb: &EbParams,
    estimator: &EbEstimatorOptions,
) -> Result<PointStats> {
    if plan.replications == 0 || plan.horizon <= plan.burn_in {
        return Err(Error::InvalidArgument(
            "need replications >= 1 and horizon > burn-in".into(),
        ));
    }
    let reps: Vec<Replication> = (0..plan.replications)
        .into_par_iter()
        .map(|k| replicate(plan, k))
        .collect::<Result<_>>()?;
    let rewards: Vec<Vec<u32>> = reps.iter().map(|r| r.rewards.clone()).collect();
    let est_opts = EbEstimatorOptions {
        seed: derive_seed(plan.seed, &[u64::MAX]),
        ..*estimator
    };
    let eb_est = estimate_eb(&rewards, eb, &est_opts)?;
    let throughput = estimate_throughput(&rewards, 20, 0.95)?;
    let n = (plan.horizon - plan.burn_in) as f64;
    let scale = collision_scale(plan.params).unwrap_or(0.0);
    let collision = (0..plan.params.n_channels)
        .map(|ch| {
            let per_rep: Vec<f64> = reps
                .iter()
                .map(|r| r.collisions[ch] as f64 / n * scale)
                .collect();
            if per_rep.len() < 2 || per_rep.iter().all(|&v| v == per_rep[0]) {
                Ok(Estimate::exact(per_rep[0]))
            } else {
                mean_ci(&per_rep, 0.95)
            }
        })
        .collect::<Result<_>>()?;
    let head = reps
        .into_iter()
        .next()
        .filter(|r| !r.head.is_empty())
        .map(|r| Trace {
            records: r.head,
            params: *plan.params,
            policy: plan.policy.clone(),
            seed: derive_seed(plan.seed, &[0]),
        });
    Ok(PointStats {
        eb: eb_est,
        throughput,
        collision,
        rewards,
        head,
    })
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub gamma: f64,
    pub tau: f64,
    pub eb_closed: f64,
    pub eb_sim: f64,
    pub eb_ci_lo: f64,
    pub eb_ci_hi: f64,
    pub th_closed: f64,
    pub th_sim: f64,
    pub collision_max: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub row: SummaryRow,
    pub closed: TheoremOneResult,
    pub policy: Option<PolicyConfig>,
    pub stats: Option<PointStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<PointResult>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

pub(crate) fn write_config_echo(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

/// Policy simulated at collision level `gamma`.
pub fn policy_for(
    kind: PolicyKind,
    gamma: f64,
    closed: &TheoremOneResult,
    cfg: &ExperimentConfig,
) -> Result<PolicyConfig> {
    let n = cfg.channel.n_channels;
    Ok(match kind {
        PolicyKind::MsAt => PolicyConfig::at(n, ATParams::finite(closed.tau_star)?),
        PolicyKind::MsAtInf => PolicyConfig::at(n, ATParams::unbounded()),
        PolicyKind::MsMt if gamma == 0.0 => PolicyConfig::mt(n, MTParams::new(0.0)?),
        PolicyKind::MsMt => PolicyConfig::mt(
            n,
            calibrate_mt(gamma, &cfg.channel, &cfg.calibration_budget())?,
        ),
    })
}

fn sweep_point(
    cfg: &ExperimentConfig,
    idx: usize,
    gamma: f64,
    eb: &EbParams,
) -> Result<PointResult> {
    let closed = theorem_one(gamma, eb.theta, &cfg.channel, &SpectralOptions::default())?;
    let mut row = SummaryRow {
        gamma,
        tau: match cfg.sweep.policy {
            PolicyKind::MsAtInf => f64::INFINITY,
            _ => closed.tau_star,
        },
        eb_closed: closed.eb_star,
        eb_sim: f64::NAN,
        eb_ci_lo: f64::NAN,
        eb_ci_hi: f64::NAN,
        th_closed: closed.th_star,
        th_sim: f64::NAN,
        collision_max: f64::NAN,
        feasible: false,
    };
    if cfg.sweep.policy == PolicyKind::MsAtInf {
        row.eb_closed = closed.loose_eb;
        row.th_closed = closed.th_ms_inf;
    }
    let simulated = policy_for(cfg.sweep.policy, gamma, &closed, cfg).and_then(|policy| {
        let initial = cfg.simulation.initial();
        let plan = PointPlan {
            params: &cfg.channel,
            policy: &policy,
            horizon: cfg.simulation.horizon,
            replications: cfg.simulation.replications,
            burn_in: cfg.simulation.burn_in,
            initial: &initial,
            seed: derive_seed(cfg.seed, &[idx as u64]),
            keep_slots: cfg.simulation.trace_export_slots,
        };
        let stats = simulate_point(&plan, eb, &cfg.estimator)?;
        Ok((policy, stats))
    });
    Ok(match simulated {
        Ok((policy, stats)) => {
            row.eb_sim = stats.eb.estimate.value;
            row.eb_ci_lo = stats.eb.estimate.ci_lo;
            row.eb_ci_hi = stats.eb.estimate.ci_hi;
            row.th_sim = stats.throughput.value;
            row.collision_max = stats.collision_max();
            row.feasible = stats.feasible(gamma);
            PointResult {
                row,
                closed,
                policy: Some(policy),
                stats: Some(stats),
                error: None,
            }
        }
        Err(e) => {
            log::error!("sweep point gamma = {gamma} failed: {e}");
            PointResult {
                row,
                closed,
                policy: None,
                stats: None,
                error: Some(e.to_string()),
            }
        }
    })
}

/// Closed forms and simulation for every gamma of the grid. Writes
/// `config.toml`, `summary.csv`, `traces/point_<k>.csv` and, for memoryless
/// transmission, `mt_calibration.csv` under the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let eb = cfg.eb_params()?;
    let pool = thread_pool(cfg.workers)?;
    let points: Vec<PointResult> = pool.install(|| {
        cfg.sweep
            .gammas
            .par_iter()
            .enumerate()
            .map(|(k, &g)| sweep_point(cfg, k, g, &eb))
            .collect::<Result<_>>()
    })?;

    let dir = &cfg.output_dir;
    write_config_echo(cfg, dir)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for p in &points {
        w.serialize(&p.row)?;
    }
    w.flush()?;

    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    for (k, p) in points.iter().enumerate() {
        if let Some(head) = p.stats.as_ref().and_then(|s| s.head.as_ref()) {
            head.write_csv(
                File::create(traces.join(format!("point_{k:03}.csv")))?,
                None,
            )?;
        }
    }

    if cfg.sweep.policy == PolicyKind::MsMt {
        let mut w = csv::Writer::from_path(dir.join("mt_calibration.csv"))?;
        w.write_record(["gamma", "p_tx"])?;
        for p in &points {
            let p_tx = match p.policy.as_ref().map(|c| c.transmission) {
                Some(crate::policy::TransmissionPolicy::Memoryless(m)) => m.p_tx.to_string(),
                _ => "NaN".into(),
            };
            w.write_record([p.row.gamma.to_string(), p_tx])?;
        }
        w.flush()?;
    }
    Ok(SweepOutcome { points })
}

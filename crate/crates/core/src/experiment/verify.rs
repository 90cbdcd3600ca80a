use serde::Serialize;

use super::config::ExperimentConfig;
use super::sweep::{simulate_point, thread_pool, write_config_echo, PointPlan};
use crate::analytics::{
    batch_means, check_supremum_bound, mean_ci, psi_success_spectral, psi_x_spectral, theorem_one,
    SpectralOptions, SupremumOptions, TheoremOneResult,
};
use crate::channel::{derive_sampled, BeliefVector, ChannelParams};
use crate::error::Result;
use crate::policy::{ATParams, DebtComparison, PolicyConfig};
use crate::risk_dp::{
    exhaustive_policy_oracle, verify_myopic, DpOptions, MyopicReport, OracleOptions,
};
use crate::rng::derive_seed;
use crate::simulator::{
    collision_scale, coupled_run, decompose_intervals, prefix_dominance_violations, run,
    InitialChannels, RunSpec,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpRow {
    pub n_channels: usize,
    pub horizon: usize,
    pub theta: f64,
    pub dp_value: f64,
    pub myopic_value: f64,
    pub oracle_value: Option<f64>,
    pub max_gap: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub dp_rows: Vec<DpRow>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        log::info!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        match outcome {
            Ok((ok, detail)) => self.push(name, ok, detail),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

/// Rounds to a multiple of 1/64 so that `tau * t` hits integers and exact
/// ties between the debt and the target actually occur.
fn dyadic(x: f64) -> f64 {
    ((x * 64.0).round() / 64.0).max(1.0 / 64.0)
}

fn at(n: usize, tau: f64, comparison: DebtComparison) -> Result<PolicyConfig> {
    Ok(PolicyConfig::at(
        n,
        ATParams {
            comparison,
            ..ATParams::finite(tau)?
        },
    ))
}

fn target_taus(cfg: &ExperimentConfig, closed: &TheoremOneResult) -> Vec<f64> {
    let mut taus: Vec<f64> = cfg
        .verify
        .tau_fractions
        .iter()
        .map(|f| dyadic(f * closed.loose_eb))
        .collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

fn check_intervals(cfg: &ExperimentConfig, taus: &[f64]) -> Result<(bool, String)> {
    let comparison = if cfg.verify.inject_fault {
        DebtComparison::Inclusive
    } else {
        DebtComparison::Strict
    };
    let mut total = 0;
    let mut parts = Vec::new();
    for (k, &tau) in taus.iter().enumerate() {
        let spec = RunSpec::new(
            cfg.channel,
            at(cfg.channel.n_channels, tau, comparison)?,
            cfg.verify.horizon,
            derive_seed(cfg.seed, &[1, k as u64]),
        );
        let rep = decompose_intervals(&run(&spec)?)?.check_lemmas();
        total += rep.total();
        parts.push(format!("tau={tau}: {} violations", rep.total()));
    }
    Ok((total == 0, parts.join("; ")))
}

fn check_coupling(cfg: &ExperimentConfig, taus: &[f64]) -> Result<(bool, String)> {
    let n = cfg.channel.n_channels;
    let mut pairs: Vec<(PolicyConfig, PolicyConfig)> = taus
        .windows(2)
        .map(|w| {
            Ok((
                at(n, w[0], DebtComparison::Strict)?,
                at(n, w[1], DebtComparison::Strict)?,
            ))
        })
        .collect::<Result<_>>()?;
    if let Some(&top) = taus.last() {
        pairs.push((
            at(n, top, DebtComparison::Strict)?,
            PolicyConfig::at(n, ATParams::unbounded()),
        ));
    }
    let mut bad = 0;
    for (k, (lo, hi)) in pairs.iter().enumerate() {
        let (a, b) = coupled_run(
            &cfg.channel,
            lo,
            hi,
            cfg.verify.horizon,
            derive_seed(cfg.seed, &[2, k as u64]),
            InitialChannels::Stationary,
        )?;
        bad += prefix_dominance_violations(&a, &b);
    }
    Ok((
        bad == 0,
        format!("{} coupled pairs, {bad} prefix violations", pairs.len()),
    ))
}

fn check_feasibility(cfg: &ExperimentConfig, theta: f64) -> Result<(bool, String)> {
    let scale = collision_scale(&cfg.channel).unwrap_or(0.0);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for (k, &gamma) in cfg.sweep.gammas.iter().enumerate() {
        let closed = theorem_one(gamma, theta, &cfg.channel, &SpectralOptions::default())?;
        let spec = RunSpec::new(
            cfg.channel,
            at(
                cfg.channel.n_channels,
                closed.tau_star,
                DebtComparison::Strict,
            )?,
            cfg.verify.horizon,
            derive_seed(cfg.seed, &[3, k as u64]),
        );
        let trace = run(&spec)?;
        for ch in 0..cfg.channel.n_channels {
            let hits: Vec<f64> = trace
                .records
                .iter()
                .map(|r| {
                    if r.collision_channel() == Some(ch) {
                        scale
                    } else {
                        0.0
                    }
                })
                .collect();
            let est = mean_ci(&batch_means(&hits, 20)?, 0.95)?;
            let slack = est.value - (gamma + 3.0 * est.std_err);
            worst = worst.max(slack);
            ok &= slack <= 0.0;
        }
    }
    Ok((ok, format!("largest C_i - (gamma + 3 sigma) = {worst:.3e}")))
}

fn check_dp(cfg: &ExperimentConfig, report: &mut VerificationReport) -> Result<(bool, String)> {
    let sc = derive_sampled(&cfg.channel)?;
    let n = cfg.channel.n_channels;
    let dp_opts = DpOptions::default();
    if n > dp_opts.max_channels {
        return Ok((true, format!("skipped: {n} channels exceed the DP cap")));
    }
    let start = BeliefVector::stationary(n, &sc);
    let oracle_opts = OracleOptions::default();
    let mut ok = true;
    let mut cells = 0;
    for k in 2..=cfg.verify.dp_max_horizon {
        for &theta in &cfg.verify.dp_thetas {
            let rep: MyopicReport = verify_myopic(&start, k, theta, &sc, &dp_opts)?;
            let oracle = match exhaustive_policy_oracle(&start, k, theta, &sc, &oracle_opts) {
                Ok(v) => Some(v),
                Err(crate::Error::Budget(_)) => None,
                Err(e) => return Err(e),
            };
            ok &= rep.passed(1e-12);
            if let Some(v) = oracle {
                ok &= (v - rep.dp_value).abs() <= 1e-12;
            }
            cells += 1;
            report.dp_rows.push(DpRow {
                n_channels: n,
                horizon: k,
                theta,
                dp_value: rep.dp_value,
                myopic_value: rep.myopic_value,
                oracle_value: oracle,
                max_gap: rep.max_gap,
                violations: rep.violations.len(),
            });
        }
    }
    Ok((ok, format!("{cells} (K, theta) cells")))
}

fn check_spectral(
    cfg: &ExperimentConfig,
    theta: f64,
    closed: &TheoremOneResult,
) -> Result<(bool, String)> {
    let opts = SpectralOptions::default();
    let exact = psi_success_spectral(theta, &cfg.channel, &opts)? / theta;
    let policy = PolicyConfig::at(cfg.channel.n_channels, ATParams::unbounded());
    let initial = InitialChannels::Stationary;
    let plan = PointPlan {
        params: &cfg.channel,
        policy: &policy,
        horizon: cfg.verify.horizon,
        replications: cfg.verify.replications,
        burn_in: cfg.simulation.burn_in.min(cfg.verify.horizon / 2),
        initial: &initial,
        seed: derive_seed(cfg.seed, &[4]),
        keep_slots: 0,
    };
    let stats = simulate_point(
        &plan,
        &crate::analytics::EbParams::from_theta(theta)?,
        &cfg.estimator,
    )?;
    let sim = stats.eb.estimate.value;
    let rel = (sim - exact).abs() / exact;
    Ok((
        rel <= cfg.verify.spectral_tolerance,
        format!(
            "exact kernel {exact:.6}, idle-sensing kernel {:.6}, Monte-Carlo {sim:.6} (rel. gap {rel:.4})",
            closed.loose_eb
        ),
    ))
}

/// Log Perron root of `[[e^t a, e^t (1-a)], [b, 1-b]]` from the quadratic
/// characteristic polynomial.
fn two_state_log_root(t: f64, a: f64, b: f64) -> f64 {
    let (m00, m01, m10, m11) = (t.exp() * a, t.exp() * (1.0 - a), b, 1.0 - b);
    let tr = m00 + m11;
    let det = m00 * m11 - m01 * m10;
    (0.5 * (tr + (tr * tr - 4.0 * det).sqrt())).ln()
}

fn check_two_state(cfg: &ExperimentConfig, closed: &TheoremOneResult) -> Result<(bool, String)> {
    let one = ChannelParams {
        n_channels: 1,
        ..cfg.channel
    };
    let sc = derive_sampled(&one)?;
    let t = closed.theta_tilde;
    let spectral = psi_x_spectral(t, &one, &SpectralOptions::default())?;
    let closed_form = two_state_log_root(t, sc.p_ii, sc.p_bi);
    let gap = (spectral - closed_form).abs();
    Ok((
        gap <= 1e-12,
        format!("|spectral - closed form| = {gap:.2e}"),
    ))
}

fn check_supremum(
    cfg: &ExperimentConfig,
    theta: f64,
    closed: &TheoremOneResult,
) -> Result<(bool, String)> {
    let opts = SupremumOptions::default();
    let below = check_supremum_bound(theta, 0.9 * closed.loose_eb, &cfg.channel, 10_000, &opts)?;
    let above = check_supremum_bound(theta, 1.1 * closed.loose_eb, &cfg.channel, 10_000, &opts)?;
    Ok((
        below.bounded() && !above.bounded(),
        format!(
            "0.9x: sup {:.4} at n = {}; 1.1x: diverged at {:?}",
            below.sup, below.argsup, above.diverged_at
        ),
    ))
}

/// Runs the structural checks on the configured channel model. Writes
/// `verify_report.csv`, `dp_verification.csv` and `config.toml`.
pub fn run_verifications(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let theta = cfg.eb_params()?.theta;
    let closed = theorem_one(0.0, theta, &cfg.channel, &SpectralOptions::default())?;
    let taus = target_taus(cfg, &closed);
    let mut report = VerificationReport::default();
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| {
        report.record("interval-lemmas", check_intervals(cfg, &taus));
        report.record("coupled-monotonicity", check_coupling(cfg, &taus));
        report.record("collision-feasibility", check_feasibility(cfg, theta));
        let dp = check_dp(cfg, &mut report);
        report.record("myopic-dp", dp);
        report.record(
            "spectral-vs-monte-carlo",
            check_spectral(cfg, theta, &closed),
        );
        report.record("two-state-closed-form", check_two_state(cfg, &closed));
        report.record("supremum-bound", check_supremum(cfg, theta, &closed));
    });

    write_config_echo(cfg, &cfg.output_dir)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("verify_report.csv"))?;
    for c in &report.checks {
        w.serialize(c)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("dp_verification.csv"))?;
    for r in &report.dp_rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(report)
}

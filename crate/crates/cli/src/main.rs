//! `msat`: experiment runner for myopic-sensing opportunistic access.
//!
//! Rates are in 1/ms and the slot length in ms. Every command resolves a
//! configuration from (in increasing priority) the built-in defaults, a
//! preset, a TOML file and command-line flags, and writes the resolved
//! configuration next to its outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use msat::experiment::{
    run_debt_histogram, run_sweep, run_verifications, ExperimentConfig, PolicyKind, PRESETS,
};

#[derive(Parser)]
#[command(
    name = "msat",
    version,
    about = "Opportunistic access over Markov on/off channels (rates in 1/ms, slot length in ms)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed forms and simulation across the gamma grid.
    Sweep(Common),
    /// Histogram of the centred debt A_{t+1} - tau t for adaptive and memoryless transmission.
    DebtHist(Common),
    /// Structural checks; exits nonzero if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Flip the adaptive debt comparison to `<=` (negative control).
        #[arg(long)]
        inject_fault: bool,
    },
    /// Print the fully resolved configuration as TOML.
    ShowConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used as the base configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Slots per replication.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated gamma grid.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// ms-at, ms-mt or ms-at-inf.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "ms-at" => Ok(PolicyKind::MsAt),
        "ms-mt" => Ok(PolicyKind::MsMt),
        "ms-at-inf" => Ok(PolicyKind::MsAtInf),
        _ => Err(format!(
            "unknown policy {s:?}; expected ms-at, ms-mt or ms-at-inf"
        )),
    }
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)
                .with_context(|| format!("reading {}", path.display()))?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if self.config.is_some() {
            if let Some(name) = &self.preset {
                log::warn!("--config given; ignoring --preset {name}");
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(h) = self.horizon {
            cfg.simulation.horizon = h;
        }
        if let Some(r) = self.replications {
            cfg.simulation.replications = r;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(g) = &self.gammas {
            cfg.sweep.gammas = g.clone();
        }
        if let Some(p) = self.policy {
            cfg.sweep.policy = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let out = run_sweep(&cfg)?;
            for p in &out.points {
                let r = &p.row;
                println!(
                    "gamma {:<8} tau {:<9.5} EB {:.4} (closed {:.4})  TH {:.4} (closed {:.4})  C_max {:.4}{}",
                    r.gamma,
                    r.tau,
                    r.eb_sim,
                    r.eb_closed,
                    r.th_sim,
                    r.th_closed,
                    r.collision_max,
                    p.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
                );
            }
            println!("wrote {}", cfg.output_dir.join("summary.csv").display());
            Ok(out.failures() == 0)
        }
        Command::DebtHist(c) => {
            let cfg = c.resolve()?;
            for h in run_debt_histogram(&cfg)? {
                println!(
                    "{:<28} range [{:.3}, {:.3}]  mean square {:.3}",
                    h.policy,
                    h.min,
                    h.max,
                    h.spread()
                );
            }
            println!("wrote {}", cfg.output_dir.join("debt_hist.csv").display());
            Ok(true)
        }
        Command::Verify {
            common,
            inject_fault,
        } => {
            let mut cfg = common.resolve()?;
            cfg.verify.inject_fault |= inject_fault;
            let report = run_verifications(&cfg)?;
            for c in &report.checks {
                println!(
                    "{} {:<24} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(report.all_passed())
        }
        Command::ShowConfig(c) => {
            print!("{}", c.resolve()?.to_toml_string()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

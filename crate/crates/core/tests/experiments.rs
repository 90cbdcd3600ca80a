use std::fs;

use msat::experiment::{
    run_debt_histogram, run_sweep, run_verifications, ExperimentConfig, PolicyKind, PRESETS,
};

fn small(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        output_dir: dir.to_path_buf(),
        ..Default::default()
    };
    cfg.simulation.horizon = 40_000;
    cfg.simulation.replications = 4;
    cfg.simulation.trace_export_slots = 500;
    cfg.sweep.gammas = vec![0.01, 0.05, 0.3];
    cfg
}

#[test]
fn sweep_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = small(&dir.path().join("a"));
    a.workers = 1;
    let mut b = small(&dir.path().join("b"));
    b.workers = 3;
    let ra = run_sweep(&a).unwrap();
    let rb = run_sweep(&b).unwrap();
    assert_eq!(ra.failures(), 0);
    for (x, y) in ra.points.iter().zip(&rb.points) {
        assert_eq!(x.row.eb_sim.to_bits(), y.row.eb_sim.to_bits());
        assert_eq!(x.row.th_sim.to_bits(), y.row.th_sim.to_bits());
    }
    for f in ["summary.csv", "traces/point_002.csv"] {
        assert_eq!(
            fs::read(a.output_dir.join(f)).unwrap(),
            fs::read(b.output_dir.join(f)).unwrap()
        );
    }
    let trace = fs::read_to_string(a.output_dir.join("traces/point_000.csv")).unwrap();
    assert_eq!(trace.lines().count(), 501);
}

#[test]
fn sweep_rows_follow_the_closed_form_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = run_sweep(&cfg).unwrap();
    let rows: Vec<_> = out.points.iter().map(|p| &p.row).collect();
    // Closed forms rise with gamma and saturate.
    assert!(rows.windows(2).all(|w| w[0].eb_closed <= w[1].eb_closed));
    assert!(rows.iter().all(|r| r.eb_closed <= r.th_closed + 1e-12));
    for (p, r) in out.points.iter().zip(&rows) {
        assert!(r.eb_ci_lo <= r.eb_sim && r.eb_sim <= r.eb_ci_hi);
        if p.closed.below_knee() {
            assert!(
                (r.eb_sim - r.tau).abs() < 1e-3 && (r.th_sim - r.tau).abs() < 1e-3,
                "{r:?}"
            );
        } else {
            assert!(r.eb_ci_hi < r.th_sim, "{r:?}");
        }
    }
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rd.headers().unwrap().len(), 10);
    assert_eq!(rd.records().count(), 3);
    assert!(!dir.path().join("mt_calibration.csv").exists());
}

#[test]
fn config_round_trips_through_toml() {
    for name in PRESETS {
        let cfg = ExperimentConfig::preset(name).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
    assert_eq!(
        ExperimentConfig::preset("paper-fig2b")
            .unwrap()
            .sweep
            .policy,
        PolicyKind::MsMt
    );
    assert!(ExperimentConfig::preset("nope").is_err());
    assert!(
        ExperimentConfig::from_toml_str("[sweep]\ngammas = [-0.1]\n")
            .and_then(|c| c.validate())
            .is_err()
    );
}

#[test]
fn verification_and_histogram_on_small_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.verify.replications = 4;
    cfg.verify.dp_max_horizon = 4;
    let report = run_verifications(&cfg).unwrap();
    assert!(report.all_passed(), "{:?}", report.checks);
    assert!(!report.dp_rows.is_empty());

    let hists = run_debt_histogram(&cfg).unwrap();
    assert_eq!(hists.len(), 2);
    // Adaptive debt stays within one packet above target; memoryless wanders.
    assert!(hists[0].max < 1.0 + 1e-9);
    assert!(hists[1].spread() > hists[0].spread());
}

use std::path::Path;
use std::process::Command;

use hjlab_cli::config::{BetaSearch, CheckSpec, DomainSpec, ExperimentConfig, InitialSpec};
use hjlab_cli::experiment::{run_batch, run_experiment, CheckStatus, Status};
use hjlab_core::estimates::DecayModel;
use hjlab_core::solver::{DtPolicy, SnapshotPolicy, SolverConfig};

fn poly(seed: u64) -> InitialSpec {
    InitialSpec::CosinePoly {
        modes: 4,
        seed,
        osc: 1.0,
    }
}

fn small(id: &str, p: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(id, DomainSpec::interval(1.0, 64), 1.0, p, poly(seed));
    cfg.solver = SolverConfig {
        record_interval: Some(1e-2),
        ..SolverConfig::new(0.8)
    };
    cfg
}

#[test]
fn constant_data_pass_every_check_and_are_extinct_at_zero() {
    let mut cfg = ExperimentConfig::new(
        "constant",
        DomainSpec::rectangle([1.0, 2.0], [16, 24]),
        1.0,
        1.5,
        InitialSpec::Constant { value: 3.0 },
    );
    cfg.solver = SolverConfig::new(0.2);
    cfg.checks = CheckSpec {
        bernstein: true,
        fit: Some(DecayModel::Exponential),
        ..CheckSpec::default()
    };
    let r = run_experiment(&cfg, None);
    assert_eq!(r.status, Status::Passed, "{:#?}", r.checks);
    assert_eq!(r.t_star, Some(0.0));
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "check_gradient_bounds",
            "poincare_check",
            "bernstein_diagnostic",
            "y_functional",
            "window_decay_check",
            "empirical_envelope",
            "fit_decay_rate"
        ]
    );
}

#[test]
fn batch_isolates_a_blow_up() {
    let mut cfgs: Vec<ExperimentConfig> =
        (0..3).map(|k| small(&format!("ok-{k}"), 2.0, k)).collect();
    let mut bad = small("blow-up", 3.0, 9);
    bad.hamiltonian.a = 50.0;
    bad.solver.dt = DtPolicy::Fixed(0.5);
    bad.solver.t_end = 1e3;
    cfgs.insert(1, bad);
    let reports = run_batch(&cfgs, 2, None).unwrap();
    let ids: Vec<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["ok-0", "blow-up", "ok-1", "ok-2"]);
    assert_eq!(reports[1].status, Status::Failed);
    let err = reports[1].error.as_deref().unwrap();
    assert!(err.contains("blew up"), "{err}");
    for r in [&reports[0], &reports[2], &reports[3]] {
        assert!(r.passed(), "{}: {:?} {:#?}", r.id, r.error, r.checks);
    }
    let alone = run_experiment(&cfgs[2], None);
    assert_eq!(alone.trajectory, reports[2].trajectory);
}

#[test]
fn batch_rejects_duplicate_ids() {
    let cfgs = vec![small("same", 2.0, 0), small("same", 2.0, 1)];
    assert!(run_batch(&cfgs, 1, None).is_err());
}

#[test]
fn invalid_config_is_reported_not_raised() {
    let mut cfg = small("bad-p", 2.0, 0);
    cfg.hamiltonian.p = -1.0;
    let r = run_experiment(&cfg, None);
    assert_eq!(r.status, Status::Failed);
    assert!(r.error.is_some() && r.checks.is_empty());
}

#[test]
fn short_runs_skip_the_y_checks() {
    let mut cfg = small("short", 2.0, 0);
    cfg.solver.t_end = 0.01;
    let r = run_experiment(&cfg, None);
    for name in ["y_functional", "window_decay_check", "empirical_envelope"] {
        assert_eq!(r.check(name).unwrap().status, CheckStatus::Skipped);
    }
    assert!(r.passed());
}

#[test]
fn piecewise_data_are_smoothed_unless_raw() {
    let mut cfg = small("pl", 1.0, 0);
    cfg.initial = InitialSpec::PiecewiseLinear {
        knots: 5,
        seed: 2,
        osc: 1.0,
    };
    let smoothed = run_experiment(&cfg, None);
    assert!(smoothed.warnings.iter().all(|w| !w.contains("raw")));
    cfg.smoothing.raw = true;
    let raw = run_experiment(&cfg, None);
    assert!(raw.warnings.iter().any(|w| w.contains("raw")));
    assert!(raw.initial_osc.unwrap() > smoothed.initial_osc.unwrap());
}

#[test]
fn bernstein_gets_default_snapshots() {
    let mut cfg = small("bern", 1.0, 3);
    cfg.checks = CheckSpec {
        bernstein: true,
        ..CheckSpec::none()
    };
    let r = run_experiment(&cfg, None);
    let traj = r.trajectory.as_ref().unwrap();
    let snaps = traj.samples.iter().filter(|s| s.snapshot.is_some()).count();
    assert!((16..=18).contains(&snaps), "{snaps} snapshots");
    assert_eq!(r.config.solver.snapshots, SnapshotPolicy::None);
    assert!(r.passed(), "{:#?}", r.checks);
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn artifacts_are_written_per_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfgs = vec![small("first", 2.0, 0), small("second", 1.5, 1)];
    let reports = run_batch(&cfgs, 2, Some(dir.path())).unwrap();
    for r in &reports {
        let csv = read(&dir.path().join(&r.id).join("trajectory.csv"));
        assert!(csv.starts_with("t,M,m,osc,grad_sup,grad_q\n"));
        assert_eq!(csv.lines().count(), r.samples + 1);
        let json: serde_json::Value =
            serde_json::from_str(&read(&dir.path().join(&r.id).join("report.json"))).unwrap();
        assert_eq!(json["id"], r.id.as_str());
        assert_eq!(json["status"], "passed");
        assert!(json["checks"]
            .as_array()
            .unwrap()
            .iter()
            .any(|c| c["name"] == "check_gradient_bounds"));
    }
}

fn hjlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hjlab"))
}

#[test]
fn binary_runs_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        serde_json::to_string(&small("bin", 2.0, 5)).unwrap(),
    )
    .unwrap();
    let out = dir.path().join("runs");
    let status = hjlab()
        .args([
            "run",
            config.to_str().unwrap(),
            "--seed",
            "6",
            "--out",
            out.to_str().unwrap(),
        ])
        .env_remove("HJLAB_OUT")
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&read(&out.join("bin/report.json"))).unwrap();
    assert_eq!(report["config"]["initial"]["seed"], 6);

    let csv = out.join("bin/trajectory.csv");
    let verify = hjlab()
        .args([
            "verify",
            csv.to_str().unwrap(),
            "--a",
            "1",
            "--p",
            "2",
            "--checks",
            "check_gradient_bounds,y_functional",
        ])
        .output()
        .unwrap();
    assert!(
        verify.status.success(),
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );
    let entries: serde_json::Value = serde_json::from_slice(&verify.stdout).unwrap();
    assert_eq!(entries.as_array().unwrap().len(), 2);
    let negative = hjlab()
        .args([
            "verify",
            csv.to_str().unwrap(),
            "--a",
            "-1",
            "--p",
            "2",
            "--checks",
            "check_gradient_bounds",
        ])
        .output()
        .unwrap();
    assert!(
        negative.status.success(),
        "{}",
        String::from_utf8_lossy(&negative.stderr)
    );
}

#[test]
fn binary_honours_the_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    let mut cfg = small("env", 2.0, 1);
    cfg.out = Some(dir.path().join("from-config"));
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let env_root = dir.path().join("from-env");
    let status = hjlab()
        .args(["run", config.to_str().unwrap()])
        .env("HJLAB_OUT", &env_root)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(env_root.join("env/report.json").exists());
    assert!(!dir.path().join("from-config").exists());
}

#[test]
fn binary_oracle_compare() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        "oracle",
        DomainSpec::interval(1.0, 64),
        -1.0,
        2.0,
        InitialSpec::CosineMode {
            wavenumbers: vec![1],
            amplitude: 0.5,
        },
    );
    cfg.solver = SolverConfig {
        dt: DtPolicy::Fixed(1e-3),
        ..SolverConfig::new(0.2)
    };
    let config = dir.path().join("oracle.json");
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = hjlab()
        .args([
            "oracle-compare",
            config.to_str().unwrap(),
            "--refinements",
            "2",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cmp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ratios = cmp["ratios"].as_array().unwrap();
    assert_eq!(ratios.len(), 2);
    assert!(ratios.iter().all(|r| r.as_f64().unwrap() > 1.8));
}

#[test]
fn beta_search_picks_an_admissible_candidate() {
    let mut cfg = small("search", 2.0, 4);
    cfg.beta_search = Some(BetaSearch {
        candidates: vec![3.0, 4.5, 6.0, 9.0],
        t_ref: None,
    });
    let r = run_experiment(&cfg, None);
    assert!(r.passed(), "{:#?}", r.checks);
    let beta = r.decay_params.unwrap().beta;
    assert!([4.5, 6.0, 9.0].contains(&beta), "{beta}");
    assert!(r.warnings.iter().any(|w| w.contains("selected")));

    cfg.beta = Some(7.0);
    assert_eq!(run_experiment(&cfg, None).decay_params.unwrap().beta, 7.0);

    cfg.beta = None;
    cfg.beta_search.as_mut().unwrap().candidates = vec![1.0];
    let fallback = run_experiment(&cfg, None);
    assert!(fallback.warnings.iter().any(|w| w.contains("beta search failed")));
}

//! Single experiments, batches and oracle comparisons.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use hjlab_core::estimates::{
    self, bernstein_diagnostic, check_gradient_bounds, decay_params, empirical_envelope,
    fit_decay_rate, poincare_check, select_beta, window_decay_check, y_functional, y_shape_check,
    BernsteinCase, BoundReport, DecayFit, DecayParams, Location, Tracker,
};
use hjlab_core::grid::sup_norm;
use hjlab_core::semigroup::smoothing_sequence;
use hjlab_core::solver::{
    cole_hopf_oracle, run_with_plan, DtPolicy, EpsSchedule, SnapshotPolicy, Trajectory,
};
use hjlab_core::{Domain, Error, Field, SpectralPlan};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::initial_data::generate_initial_data;
use crate::io::{write_json, write_trajectory_csv};

/// Number of Bernstein snapshots taken when the config asks for none.
pub const DEFAULT_SNAPSHOTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// The check does not apply to this trajectory (e.g. too little decay).
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: CheckStatus,
    pub detail: Option<String>,
    pub report: Option<BoundReport>,
}

impl CheckEntry {
    fn from_report(name: &str, report: BoundReport) -> Self {
        let status = if report.passed() {
            CheckStatus::Passed
        } else {
            CheckStatus::Failed
        };
        Self {
            name: name.into(),
            status,
            detail: None,
            report: Some(report),
        }
    }

    fn from_result(name: &str, result: hjlab_core::Result<BoundReport>) -> Self {
        match result {
            Ok(report) => Self::from_report(name, report),
            Err(Error::InsufficientDecay { ratio }) => Self::skipped(
                name,
                format!("osc(t_end)/osc(0) = {ratio:e} exceeds 1%; run longer to evaluate"),
            ),
            Err(e) => Self::error(name, e.to_string()),
        }
    }

    fn skipped(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skipped,
            detail: Some(detail),
            report: None,
        }
    }

    fn error(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Error,
            detail: Some(detail),
            report: None,
        }
    }

    pub fn ok(&self) -> bool {
        matches!(self.status, CheckStatus::Passed | CheckStatus::Skipped)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub id: String,
    pub config: ExperimentConfig,
    pub status: Status,
    pub error: Option<String>,
    pub checks: Vec<CheckEntry>,
    pub fits: Vec<DecayFit>,
    pub decay_params: Option<DecayParams>,
    pub c_emp: Option<f64>,
    pub t_star: Option<f64>,
    pub extinction_threshold: Option<f64>,
    pub steps: usize,
    pub samples: usize,
    pub initial_osc: Option<f64>,
    pub final_osc: Option<f64>,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    /// In-memory trajectory for library callers; not serialised.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl Report {
    fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            id: cfg.id.clone(),
            config: cfg.clone(),
            status: Status::Failed,
            error: None,
            checks: Vec::new(),
            fits: Vec::new(),
            decay_params: None,
            c_emp: None,
            t_star: None,
            extinction_threshold: None,
            steps: 0,
            samples: 0,
            initial_osc: None,
            final_osc: None,
            wall_clock_s: 0.0,
            warnings: Vec::new(),
            artifacts: Vec::new(),
            trajectory: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Passed
    }

    pub fn check(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.initial.set_seed(seed);
        }
        if let Some(beta) = self.beta {
            cfg.beta = Some(beta);
        }
        if let Some(tol) = self.tolerance {
            cfg.checks.tolerance = tol;
        }
    }
}

/// Generated and, if needed, smoothed initial data.
pub struct Prepared {
    pub domain: Domain,
    pub plan: SpectralPlan,
    pub mu0: Field,
    pub warnings: Vec<String>,
}

pub fn prepare(cfg: &ExperimentConfig) -> anyhow::Result<Prepared> {
    cfg.validate()?;
    let domain = cfg.domain.build()?;
    let plan = SpectralPlan::new(&domain);
    let raw = generate_initial_data(&cfg.initial, &domain)?;
    let mut warnings = Vec::new();
    let mu0 = if cfg.initial.neumann_compatible() {
        raw
    } else if cfg.smoothing.raw {
        warnings.push(
            "solving from raw initial data that need not satisfy the Neumann condition".into(),
        );
        raw
    } else {
        smoothing_sequence(&raw, cfg.smoothing.n, &plan)
            .context("smoothing the initial data")?
            .field
    };
    Ok(Prepared {
        domain,
        plan,
        mu0,
        warnings,
    })
}

fn effective_solver(cfg: &ExperimentConfig) -> hjlab_core::solver::SolverConfig {
    let mut solver = cfg.solver.clone();
    if cfg.checks.bernstein && solver.snapshots == SnapshotPolicy::None {
        solver.snapshots = SnapshotPolicy::Spread(DEFAULT_SNAPSHOTS);
    }
    solver
}

/// Generates the data, integrates, evaluates the enabled checks and, when
/// `out_root` is given, writes `<out_root>/<id>/{trajectory.csv,report.json}`.
///
/// Failures are recorded in the report rather than returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: Option<&Path>) -> Report {
    let start = Instant::now();
    let mut report = Report::empty(cfg);
    if let Err(e) = execute(cfg, &mut report) {
        report.status = Status::Failed;
        report.error = Some(format!("{e:#}"));
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(root) = out_root {
        if let Err(e) = write_artifacts(&mut report, root) {
            report.status = Status::Failed;
            report.error.get_or_insert_with(|| format!("{e:#}"));
        }
    }
    report
}

fn execute(cfg: &ExperimentConfig, report: &mut Report) -> anyhow::Result<()> {
    let prepared = prepare(cfg)?;
    report.warnings.extend(prepared.warnings.iter().cloned());
    let spec = cfg.hamiltonian.spec()?;
    let solver = effective_solver(cfg);
    let traj = run_with_plan(
        &prepared.mu0,
        &spec,
        &solver,
        &prepared.domain,
        &prepared.plan,
    )?;
    report.t_star = traj.t_star;
    report.extinction_threshold = Some(traj.extinction_threshold);
    report.steps = traj.steps;
    report.samples = traj.samples.len();
    report.initial_osc = traj.samples.first().map(|s| s.osc());
    report.final_osc = traj.samples.last().map(|s| s.osc());
    report.warnings.extend(traj.warnings.iter().cloned());

    evaluate_checks(cfg, &prepared, &traj, report);
    report.status = if report.checks.iter().all(CheckEntry::ok) {
        Status::Passed
    } else {
        Status::Failed
    };
    report.trajectory = Some(traj);
    Ok(())
}

fn evaluate_checks(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    full: &Trajectory,
    report: &mut Report,
) {
    let checks = &cfg.checks;
    let truncated = match full.t_star {
        Some(t_star) if checks.until_extinction && full.until(t_star).samples.len() >= 2 => {
            let head = full.until(t_star);
            let dropped = full.samples.len() - head.samples.len();
            if dropped > 0 {
                report.warnings.push(format!(
                    "trajectory checks use the {} samples up to t_star = {t_star}; {dropped} later samples excluded",
                    head.samples.len()
                ));
            }
            Some(head)
        }
        _ => None,
    };
    let traj = truncated.as_ref().unwrap_or(full);
    let (a, p) = (cfg.hamiltonian.a, cfg.hamiltonian.p);
    let d = &prepared.domain;
    let tol = checks.tolerance;
    let params = match (cfg.beta, &cfg.beta_search) {
        (None, Some(search)) => {
            let t_last = traj.samples.last().map_or(0.0, |s| s.t);
            let t_ref = search.t_ref.unwrap_or(0.5 * t_last);
            match select_beta(traj, d.dim(), p, &search.candidates, t_ref, tol) {
                Ok(choice) => {
                    report.warnings.push(format!(
                        "beta = {} selected from {} candidates (osc bound {:.3e} at t = {t_ref})",
                        choice.beta,
                        search.candidates.len(),
                        choice.osc_bound
                    ));
                    Ok(choice.params)
                }
                Err(e) => {
                    report
                        .warnings
                        .push(format!("beta search failed ({e}); using the default beta"));
                    decay_params(d.dim(), p, DecayParams::default_beta(d.dim(), p))
                }
            }
        }
        (beta, _) => decay_params(
            d.dim(),
            p,
            beta.unwrap_or_else(|| DecayParams::default_beta(d.dim(), p)),
        ),
    };
    report.decay_params = params.as_ref().ok().copied();

    if checks.gradient_bounds {
        report.checks.push(CheckEntry::from_result(
            "check_gradient_bounds",
            check_gradient_bounds(traj, a, p, tol),
        ));
    }
    if checks.poincare {
        let q = checks.poincare_q.unwrap_or(d.dim() as f64 + 1.0);
        let fields = [
            (0.0, Some(&prepared.mu0)),
            (
                full.samples.last().map_or(0.0, |s| s.t),
                full.final_field.as_ref(),
            ),
        ];
        let result = (|| {
            let mut tracker = Tracker::new("poincare", tol);
            for (t, f) in fields {
                if let Some(f) = f {
                    let (lhs, rhs) = poincare_check(f, q, d)?;
                    tracker.check(lhs, rhs, Location::Time { t });
                }
            }
            Ok(BoundReport {
                records: vec![tracker.finish()],
                notes: vec![format!(
                    "q = {q}; evaluated on the initial and final fields"
                )],
            })
        })();
        report
            .checks
            .push(CheckEntry::from_result("poincare_check", result));
    }
    if checks.bernstein {
        let case = checks.bernstein_case.unwrap_or(if p <= 1.0 {
            BernsteinCase::Sqrt
        } else {
            BernsteinCase::Power
        });
        let osc0 = traj.initial_osc();
        let delta = if osc0 > 0.0 {
            checks.bernstein_delta * osc0
        } else {
            checks.bernstein_delta
        };
        report.checks.push(CheckEntry::from_result(
            "bernstein_diagnostic",
            bernstein_diagnostic(traj, d, a, p, case, delta, tol),
        ));
    }
    let y_checks = checks.y_functional || checks.window_decay || checks.envelope;
    match (&params, y_checks) {
        (Err(e), true) => {
            for (on, name) in [
                (checks.y_functional, "y_functional"),
                (checks.window_decay, "window_decay_check"),
                (checks.envelope, "empirical_envelope"),
            ] {
                if on {
                    report.checks.push(CheckEntry::error(name, e.to_string()));
                }
            }
        }
        (Ok(params), _) => {
            if checks.y_functional {
                let result = y_functional(traj, params.gamma).map(|y| {
                    let mut r = y_shape_check(&y, checks.y_tolerance);
                    r.notes.push(format!(
                        "y(0) = {:e}, tail bound {:e}",
                        y.initial(),
                        y.tail_bound
                    ));
                    r
                });
                report
                    .checks
                    .push(CheckEntry::from_result("y_functional", result));
            }
            if checks.window_decay {
                report.checks.push(CheckEntry::from_result(
                    "window_decay_check",
                    window_decay_check(traj, params.gamma, tol),
                ));
            }
            if checks.envelope {
                let result = empirical_envelope(traj, params, tol).map(|env| {
                    report.c_emp = Some(env.c_emp);
                    let mut r = env.report;
                    r.notes
                        .push(format!("C_emp = {:e}, alpha = {}", env.c_emp, env.alpha));
                    r
                });
                report
                    .checks
                    .push(CheckEntry::from_result("empirical_envelope", result));
            }
        }
        _ => {}
    }
    if let Some(model) = checks.fit {
        let entry = match fit_decay_rate(traj, model, checks.fit_window) {
            Ok(fit) => {
                report.fits.push(fit);
                let ok = fit.rate > 0.0 && fit.r_squared >= checks.fit_r_squared;
                CheckEntry {
                    name: "fit_decay_rate".into(),
                    status: if ok {
                        CheckStatus::Passed
                    } else {
                        CheckStatus::Failed
                    },
                    detail: Some(format!(
                        "{model:?} rate {:e}, R² {:.6} over {} samples (need rate > 0, R² >= {})",
                        fit.rate, fit.r_squared, fit.points, checks.fit_r_squared
                    )),
                    report: None,
                }
            }
            Err(Error::Extinct { t }) => CheckEntry::skipped(
                "fit_decay_rate",
                format!("oscillation vanished at t = {t}; there is no rate to fit"),
            ),
            Err(e) => CheckEntry::error("fit_decay_rate", e.to_string()),
        };
        report.checks.push(entry);
    }
}

fn write_artifacts(report: &mut Report, root: &Path) -> anyhow::Result<()> {
    let dir = root.join(&report.id);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(traj) = &report.trajectory {
        let path = dir.join("trajectory.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trajectory_csv(traj, file)?;
        report.artifacts.push(path);
    }
    let path = dir.join("report.json");
    report.artifacts.push(path.clone());
    write_json(report, &path)
}

/// Runs independent experiments on `parallelism` threads; reports come back
/// in input order regardless of the thread count.
pub fn run_batch(
    cfgs: &[ExperimentConfig],
    parallelism: usize,
    out_root: Option<&Path>,
) -> anyhow::Result<Vec<Report>> {
    let mut seen = HashSet::new();
    for cfg in cfgs {
        if !seen.insert(cfg.id.as_str()) {
            bail!("duplicate experiment id {:?}", cfg.id);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()?;
    Ok(pool.install(|| {
        cfgs.par_iter()
            .map(|c| run_experiment(c, out_root))
            .collect()
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRun {
    pub dt: f64,
    pub steps: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub id: String,
    pub a: f64,
    pub t: f64,
    pub runs: Vec<OracleRun>,
    /// `error(dt) / error(dt / 2)` for consecutive runs.
    pub ratios: Vec<f64>,
}

/// Compares the solver at `t_end` with the Cole–Hopf solution for `p = 2`,
/// at the configured fixed `dt` and `refinements` successive halvings.
pub fn oracle_compare(
    cfg: &ExperimentConfig,
    refinements: usize,
) -> anyhow::Result<OracleComparison> {
    if cfg.hamiltonian.p != 2.0 {
        bail!(
            "the Cole-Hopf oracle needs p = 2, got p = {}",
            cfg.hamiltonian.p
        );
    }
    let DtPolicy::Fixed(dt0) = cfg.solver.dt else {
        bail!("oracle comparison needs a fixed time step");
    };
    let prepared = prepare(cfg)?;
    let spec = cfg.hamiltonian.spec()?;
    let t = cfg.solver.t_end;
    let exact = cole_hopf_oracle(&prepared.mu0, spec.a, t, &prepared.plan)?;
    let mut runs = Vec::new();
    for k in 0..=refinements {
        let dt = dt0 / f64::powi(2.0, k as i32);
        let mut solver = cfg.solver.clone();
        solver.dt = DtPolicy::Fixed(dt);
        solver.eps = EpsSchedule::off();
        solver.snapshots = SnapshotPolicy::None;
        let traj = run_with_plan(
            &prepared.mu0,
            &spec,
            &solver,
            &prepared.domain,
            &prepared.plan,
        )?;
        let u = traj.final_field.context("solver returned no final field")?;
        let diff = Field::new(
            &prepared.domain,
            u.values()
                .iter()
                .zip(exact.values())
                .map(|(x, y)| x - y)
                .collect(),
        )?;
        runs.push(OracleRun {
            dt,
            steps: traj.steps,
            sup_error: sup_norm(&diff),
        });
    }
    let ratios = runs
        .windows(2)
        .map(|w| w[0].sup_error / w[1].sup_error)
        .collect();
    Ok(OracleComparison {
        id: cfg.id.clone(),
        a: spec.a,
        t,
        runs,
        ratios,
    })
}

/// Trajectory-only checks for `verify`, by operation name.
pub const VERIFY_CHECKS: [&str; 5] = [
    "check_gradient_bounds",
    "y_functional",
    "window_decay_check",
    "empirical_envelope",
    "fit_decay_rate",
];

pub struct VerifyOptions<'a> {
    pub a: f64,
    pub p: f64,
    pub dim: usize,
    pub beta: Option<f64>,
    pub tolerance: f64,
    pub fit: estimates::DecayModel,
    pub fit_window: f64,
    pub checks: &'a [String],
}

/// Applies trajectory-only checks to a recorded time series.
pub fn verify_trajectory(
    traj: &Trajectory,
    opts: &VerifyOptions<'_>,
) -> anyhow::Result<Vec<CheckEntry>> {
    if let Some(bad) = opts
        .checks
        .iter()
        .find(|c| !VERIFY_CHECKS.contains(&c.as_str()))
    {
        bail!("unknown or field-dependent check {bad:?}; available: {VERIFY_CHECKS:?}");
    }
    let names: Vec<&str> = if opts.checks.is_empty() {
        VERIFY_CHECKS.to_vec()
    } else {
        opts.checks.iter().map(String::as_str).collect()
    };
    let beta = opts
        .beta
        .unwrap_or_else(|| DecayParams::default_beta(opts.dim, opts.p));
    let params = decay_params(opts.dim, opts.p, beta);
    let mut out = Vec::new();
    for name in names {
        let entry = match (name, &params) {
            ("check_gradient_bounds", _) => CheckEntry::from_result(
                name,
                check_gradient_bounds(traj, opts.a, opts.p, opts.tolerance),
            ),
            ("fit_decay_rate", _) => match fit_decay_rate(traj, opts.fit, opts.fit_window) {
                Ok(fit) => CheckEntry {
                    name: name.into(),
                    status: if fit.rate > 0.0 {
                        CheckStatus::Passed
                    } else {
                        CheckStatus::Failed
                    },
                    detail: Some(format!(
                        "rate {:e}, R² {:.6}, {} samples",
                        fit.rate, fit.r_squared, fit.points
                    )),
                    report: None,
                },
                Err(e) => CheckEntry::error(name, e.to_string()),
            },
            (_, Err(e)) => CheckEntry::error(name, e.to_string()),
            ("y_functional", Ok(p)) => CheckEntry::from_result(
                name,
                y_functional(traj, p.gamma).map(|y| y_shape_check(&y, opts.tolerance)),
            ),
            ("window_decay_check", Ok(p)) => {
                CheckEntry::from_result(name, window_decay_check(traj, p.gamma, opts.tolerance))
            }
            (_, Ok(p)) => CheckEntry::from_result(
                name,
                empirical_envelope(traj, p, opts.tolerance).map(|e| e.report),
            ),
        };
        out.push(entry);
    }
    Ok(out)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use hjlab_cli::acceptance;
use hjlab_cli::config::{load_batch, load_config};
use hjlab_cli::experiment::{
    oracle_compare, run_batch, run_experiment, verify_trajectory, Overrides, Report, VerifyOptions,
};
use hjlab_cli::io::{read_trajectory_csv, resolve_out_root, write_json, OUT_ENV};
use hjlab_core::estimates::{DecayModel, DEFAULT_TOLERANCE};

#[derive(Parser)]
#[command(
    name = "hjlab",
    version,
    about = "Viscous Hamilton-Jacobi experiments with Neumann conditions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for random initial-data generators, replacing the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Free exponent of the decay machinery.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Relative slack of every bound check.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Output root (takes precedence over the environment and the config).
    #[arg(long, global = true, help = format!("Output root; overrides {OUT_ENV} and the config"))]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its artifacts.
    Run { config: PathBuf },
    /// Run a list of experiments concurrently.
    Batch {
        config: PathBuf,
        /// Worker threads; defaults to the file's hint, then to all cores.
        #[arg(long, short = 'j')]
        jobs: Option<usize>,
    },
    /// Apply trajectory checks to a recorded CSV time series.
    Verify {
        trajectory: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Comma-separated check names; all trajectory checks by default.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
        #[arg(long, value_enum, default_value = "exponential")]
        fit: FitModel,
        #[arg(long, default_value_t = 0.5)]
        fit_window: f64,
    },
    /// Compare a p = 2 run against the Cole-Hopf solution.
    OracleCompare {
        config: PathBuf,
        /// Number of successive halvings of the configured time step.
        #[arg(long, default_value_t = 1)]
        refinements: usize,
    },
    /// Run the acceptance suite and print one line per criterion.
    Accept,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FitModel {
    Exponential,
    Algebraic,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn summarise(r: &Report) {
    let status = if r.passed() { "PASSED" } else { "FAILED" };
    match &r.error {
        Some(e) => println!("{:<24} {status} ({e})", r.id),
        None => {
            let failed: Vec<&str> = r
                .checks
                .iter()
                .filter(|c| !c.ok())
                .map(|c| c.name.as_str())
                .collect();
            println!(
                "{:<24} {status} steps={} t_star={:?} {:.2}s{}",
                r.id,
                r.steps,
                r.t_star,
                r.wall_clock_s,
                if failed.is_empty() {
                    String::new()
                } else {
                    format!(" failed: {}", failed.join(","))
                }
            );
        }
    }
}

fn real_main() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        beta: cli.beta,
        tolerance: cli.tolerance,
    };
    match cli.command {
        Command::Run { config } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            let root = resolve_out_root(cli.out.as_deref(), cfg.out.as_deref());
            let report = run_experiment(&cfg, Some(&root));
            summarise(&report);
            Ok(report.passed())
        }
        Command::Batch { config, jobs } => {
            let (mut cfgs, hint) = load_batch(&config)?.into_parts();
            for cfg in &mut cfgs {
                overrides.apply(cfg);
            }
            let root = resolve_out_root(cli.out.as_deref(), None);
            let jobs = jobs.or(hint).unwrap_or_else(rayon::current_num_threads);
            let reports = run_batch(&cfgs, jobs, Some(&root))?;
            for r in &reports {
                summarise(r);
            }
            let index: Vec<_> = reports
                .iter()
                .map(|r| serde_json::json!({"id": r.id, "status": r.status, "error": r.error}))
                .collect();
            write_json(&index, &root.join("batch.json"))?;
            Ok(reports.iter().all(Report::passed))
        }
        Command::Verify {
            trajectory,
            a,
            p,
            dim,
            checks,
            fit,
            fit_window,
        } => {
            let traj = read_trajectory_csv(&trajectory)?;
            let opts = VerifyOptions {
                a,
                p,
                dim,
                beta: cli.beta,
                tolerance: cli.tolerance.unwrap_or(DEFAULT_TOLERANCE),
                fit: match fit {
                    FitModel::Exponential => DecayModel::Exponential,
                    FitModel::Algebraic => DecayModel::Algebraic,
                },
                fit_window,
                checks: &checks,
            };
            let entries = verify_trajectory(&traj, &opts)?;
            println!("{}", serde_json::to_string_pretty(&entries)?);
            Ok(entries.iter().all(|e| e.ok()))
        }
        Command::OracleCompare {
            config,
            refinements,
        } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            let cmp = oracle_compare(&cfg, refinements)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            if let Some(out) = cli.out.as_deref() {
                write_oracle(out, &cfg.id, &cmp)?;
            }
            Ok(true)
        }
        Command::Accept => {
            if cli.seed.is_some() || cli.beta.is_some() || cli.tolerance.is_some() {
                bail!("the acceptance suite uses fixed parameters; --seed, --beta and --tolerance do not apply");
            }
            let mut all = true;
            for criterion in acceptance::CRITERIA {
                let outcome = criterion();
                println!("{}", outcome.line());
                all &= outcome.passed;
            }
            Ok(all)
        }
    }
}

fn write_oracle(root: &Path, id: &str, cmp: &impl serde::Serialize) -> anyhow::Result<()> {
    let dir = root.join(id);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(cmp, &dir.join("oracle.json"))
}

//! Experiment orchestration for the viscous Hamilton–Jacobi lab: JSON
//! configs, deterministic initial data, batch runs, CSV/JSON artifacts and
//! the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod experiment;
pub mod initial_data;
pub mod io;

pub use config::{CheckSpec, DomainSpec, ExperimentConfig, InitialSpec};
pub use experiment::{run_batch, run_experiment, CheckStatus, Report, Status};

//! Experiment driver: configs, runs, eigenvalue shooting and report files.

pub mod config;
pub mod report;
pub mod run;
pub mod shooting;

pub use config::ExperimentConfig;
pub use report::{emit_csv, emit_plotdata, write_outputs};
pub use run::{run_experiment, ExitStatus, ExperimentReport, RunMode};
pub use shooting::{eigencount_shooting, eigencount_sign_flips, BoundaryCondition};

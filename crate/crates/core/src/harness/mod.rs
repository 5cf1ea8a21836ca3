//! Experiment orchestration: configuration, hold-one-out runs, sweeps over
//! the support size, and result tables.

pub mod config;
pub mod report;
pub mod run;
pub mod selftest;

pub use config::{ExperimentConfig, Method, Mode, SCENARIOS};
pub use report::{render, report, ReportFormat, COLUMNS};
pub use run::{
    execute, gen_pool, pool_dir, prepare, run, sweep_n, validity_trial, Fixture, RunOutputs,
    RunRecord, ValiditySummary, TOOL_VERSION,
};
pub use selftest::{selftest, SelftestReport};

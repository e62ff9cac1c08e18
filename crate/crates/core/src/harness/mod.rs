//! Experiment engine behind the CLI: configs, studies and CSV reports.

mod config;
mod report;
mod studies;

pub use config::{
    ensure_exact, ConvergenceSpec, DataKind, ExperimentConfig, FamilySpec, Instance, OperatorKind, ProblemSpec,
    StudyKind, SweepSpec, TimingSpec,
};
pub use report::{num, opt_num, StudyReport, Verdict};
pub use studies::{
    convergence_study, energy_audit, max_error, run_study, stability_sweep, threshold_map, timing_study,
    STABLE_GROWTH,
};

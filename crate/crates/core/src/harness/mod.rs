//! Experiment orchestration: plan files, resumable stage execution with config-hash checks,
//! learning-curve plots and speed-up reports.

mod checks;
mod manifest;
mod plan;
pub mod plot;
mod report;
mod run;

pub use checks::gradcheck_suite;
pub use manifest::{Manifest, StageRecord};
pub use plan::{ExperimentPlan, MazePreset, Variant};
pub use report::{median, speedup_report, Speedup};
pub use run::{run_plan, RunSummary, TaskReport, SCHEMA};

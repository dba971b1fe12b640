//! Config-driven experiment grids: running them and reporting on the results.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ArchSpec, DatasetSpec, ExperimentConfig, GridPoint, MixtureSpec, OptimSpec, VocabMode, OUT_ENV};
pub use report::{report, PlotFrame, Report};
pub use run::{run, run_in, run_point, FailureRecord, RunRecord, RunSummary, Seeds};

//! Experiment configuration, file-based pipeline phases and reporting.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod record;

pub use config::{ExperimentConfig, Method, ProblemConfig, RunMode, SolverKind};
pub use pipeline::{load_records, run_merge, run_offline, run_online, run_pareto, run_report, MergeManifest, OfflineManifest};
pub use record::{pareto_extract, pareto_front, write_report, ParetoSet, ReportSummary, RunRecord};

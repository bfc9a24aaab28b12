//! Run configuration, experiment recipes, metrics and plot scripts.

pub mod config;
pub mod metrics;
pub mod plots;
pub mod recipes;
pub mod run;
pub mod trace;

pub use config::{EnvKind, ReportConfig, RunConfig};
pub use metrics::{baseline_sweep, coverage_report, MetricsReport};
pub use plots::emit_plots;
pub use run::{compute_report, evaluate_run, load_run, run_experiment, train_run, Artifacts};
pub use trace::{read_trace, write_trace, TraceRecord};

//! Runs, calibration, sweeps and their on-disk artifacts.

pub mod calibrate;
pub mod config;
pub mod output;
pub mod run;
pub mod sweep;

pub use calibrate::{calibrate_beta, calibrate_beta_seeds, mean_sampling_rate, sampling_rate, with_scale, Calibration};
pub use config::{set_path, set_path_value, DatasetRef, RbfConfig, RunConfig};
pub use output::{fmt_sig, report_rows, write_metrics_csv, write_report, write_run_outputs, ReportRow};
pub use run::{derive_seed, evaluate_holdout, run_stream, run_stream_on, HoldoutSummary, MetricsRow, RunResult, RunSummary};
pub use sweep::{sweep, ParamRange, SweepEntry, SweepResult, SweepSpec};

//! Experiment driver: configuration, multi-round runs, sweeps and CSV
//! output.

pub mod config;
pub mod csv;
mod experiment;
mod report;
mod sweep;

pub use config::{ExperimentConfig, Participation, SweepAxis};
pub use experiment::{
    final_metrics, load_datasets, run_experiment, Datasets, FinalMetric, RunRecord, Scenario,
};
pub use report::{bound_rows, scenario_constants, BoundRow};
pub use sweep::{
    apply_axis, max_power_savings_db, min_axis_reaching, power_savings_db, run_sweep,
    run_sweep_records, summarize, SweepRow,
};

//! Experiment runner: configuration, the train/evaluate cadence, metrics
//! files and multi-seed aggregation.

mod aggregate;
mod config;
mod run;

pub use aggregate::{aggregate, write_aggregate, AggregateTable, Fig2Point, Metric};
pub use config::{EnvKind, ExperimentConfig};
pub use run::{
    build_agent, read_metrics, reference_cost_run, run_dir_name, run_experiment, suggest_cost_limit,
    write_summary_csv, AnyEnv, Evaluator, ReferenceCost, RunOutput,
};

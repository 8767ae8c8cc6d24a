//! Benchmark harness: datasets, metrics, tail statistics, experiment runs.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod problems;
pub mod tail;

pub use config::ExperimentConfig;
pub use dataset::{load_csv, Dataset};
pub use experiment::{aggregate, run_experiment, run_trial, AggregateRow, ExperimentSummary, TrialReport};
pub use metrics::{expression_r2, r2_score, solution_check};
pub use problems::{problem, Problem, REGISTRY};
pub use tail::{tail_barrier_stats, TailStats};

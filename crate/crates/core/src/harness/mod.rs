//! Evaluation, metrics output and run configuration for the CLI.

pub mod bench;
pub mod config;
pub mod eval;
pub mod metrics;

pub use bench::{bench_arm, ArmBench};
pub use config::RunConfig;
pub use eval::{evaluate_policy, evaluate_uniform_feasible, projection_baseline_step, ActionMode, EvalResult};
pub use metrics::{read_csv, write_csv, MetricsRow};

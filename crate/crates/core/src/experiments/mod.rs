//! Declarative sweeps, the two-state sign comparison and the gradient check.

pub mod config;
pub mod counterexample;
pub mod gradcheck;
pub mod plot;
pub mod record;
pub mod sweep;

pub use config::{
    AlgorithmSpec, EnvironmentSpec, ExperimentConfig, Horizon, Metric, OutputSpec, ScheduleShape,
    ScheduleSpec,
};
pub use counterexample::{
    run_counterexample_comparison, CounterexampleOptions, CounterexampleReport, SignTest,
};
pub use gradcheck::{run_gradient_check, GradCheckCase, GradCheckOptions, GradCheckReport};
pub use record::{read_records, write_records, RunRecord, DIVERGED};
pub use sweep::{
    grid_points, run_sweep, run_sweep_with_jobs, summarize, GridPoint, PreparedEnv, SummaryRow,
    SweepOutput,
};

//! Deterministic closed-loop driving simulation built on `urbandrive-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod agents;
pub mod config;
pub mod infractions;
pub mod metrics;
pub mod scenario;
pub mod world;

pub use config::RunConfig;
pub use metrics::{aggregate, AggregateReport, MetricsReport, Termination};
pub use scenario::Scenario;
pub use world::{run_scenario, write_log, LogRow, PlanningTick, RunOutput, Simulation};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario: {0}")]
    Scenario(String),
}

//! Experiment lifecycle: the batch loop, operator commands, reports, value
//! metrics and persistence.

mod config;
mod experiment;
pub mod metrics;
mod report;
mod snapshot;
mod state;

use thiserror::Error;

pub use config::{
    ContextProbSource, ExperimentConfig, ExperimentKind, FieldError, PopulationConfig, ScenarioConfig,
    DEFAULT_THRESHOLD,
};
pub use experiment::{BatchOutcome, Experiment, DEFAULT_REFERENCE_SAMPLE};
pub use metrics::MetricError;
pub use report::{
    AudienceBreakdown, BestCombination, CellRow, CombinationRow, MarginalRow, Report, ReportOptions,
    Totals, ValueMetrics, MARGINAL_RULE,
};
pub use snapshot::{restore, snapshot};
pub use state::{
    aggregate_logs, stream_rng, Command, Counters, Crossing, Event, ExperimentState, PhiRecord,
    RngCursors, Status, StopReason, Transition,
};

use crate::audience::AudienceError;
use crate::bandit::BanditError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid config: {}", summarize(.0))]
    Validation(Vec<FieldError>),
    #[error("cannot {command} an experiment in status {from}")]
    InvalidTransition { from: Status, command: Command },
    #[error("batch loop is not running (status {0})")]
    InvalidStatus(Status),
    #[error("no combination has crossed the threshold yet")]
    ThresholdNotCrossed,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("state does not match config: {0}")]
    StateMismatch(String),
    #[error(transparent)]
    Audience(#[from] AudienceError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn summarize(errs: &[FieldError]) -> String {
    errs.iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

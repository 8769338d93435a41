//! Request and response bodies shared by the server and the client.
//!
//! Every body carries `experiment_id`, `status` and `t`; they are `null` only
//! on responses not tied to one experiment (the list, unknown ids).

use adlift_core::engine::{
    Command, Crossing, Event, Experiment, ExperimentKind, PhiRecord, Status, StopReason, Transition,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// History payloads keep at most this many records (plus the latest).
pub const HISTORY_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leader {
    pub creative_index: usize,
    pub creative: String,
    pub audience_id: u32,
    pub audience: String,
    pub phi: f64,
}

/// Lifecycle view of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment_id: String,
    pub status: Status,
    pub t: u64,
    pub kind: ExperimentKind,
    pub continuing: bool,
    pub batches_run: u64,
    pub max_batches: u64,
    pub threshold: f64,
    pub threshold_crossed: bool,
    pub crossing: Option<Crossing>,
    pub stop_reason: Option<StopReason>,
    /// Leader after the latest batch; `None` before the first batch.
    pub leader: Option<Leader>,
}

impl Summary {
    pub fn of(exp: &Experiment) -> Self {
        let cfg = exp.config();
        let state = exp.state();
        let leader = state.latest_phi().map(|rec| Leader {
            creative_index: rec.best_creative,
            creative: cfg.creatives[rec.best_creative].clone(),
            audience_id: rec.best_audience as u32 + 1,
            audience: cfg
                .target_audiences
                .iter()
                .find(|ta| ta.id == rec.best_audience as u32 + 1)
                .map(|ta| ta.name.clone())
                .unwrap_or_default(),
            phi: rec.max_phi,
        });
        Self {
            experiment_id: cfg.experiment_id.clone(),
            status: state.status,
            t: state.t(),
            kind: cfg.kind(),
            continuing: state.continuing,
            batches_run: state.batches_run(),
            max_batches: cfg.scenario.max_batches,
            threshold: cfg.threshold,
            threshold_crossed: state.threshold_crossed(),
            crossing: state.crossing.clone(),
            stop_reason: state.stop_reason,
            leader,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub experiment_id: String,
    pub status: Status,
    pub t: u64,
    pub command: Command,
    pub transition: Transition,
    pub continuing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListReply {
    pub experiment_id: Option<String>,
    pub status: Option<Status>,
    pub t: Option<u64>,
    pub experiments: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryReply {
    pub experiment_id: String,
    pub status: Status,
    pub t: u64,
    /// Batches evaluated so far.
    pub total: usize,
    /// 1 when every batch is present.
    pub stride: usize,
    pub records: Vec<PhiRecord>,
}

impl HistoryReply {
    pub fn of(exp: &Experiment) -> Self {
        let history = &exp.state().history;
        let (stride, records) = decimate(history, HISTORY_LIMIT);
        Self {
            experiment_id: exp.id().to_owned(),
            status: exp.status(),
            t: exp.state().t(),
            total: history.len(),
            stride,
            records,
        }
    }
}

/// Every `stride`-th record, keeping the last one so the series ends at the
/// current batch.
pub fn decimate<T: Clone>(items: &[T], limit: usize) -> (usize, Vec<T>) {
    if items.len() <= limit {
        return (1, items.to_vec());
    }
    let stride = items.len().div_ceil(limit);
    let mut out: Vec<T> = items.iter().step_by(stride).cloned().collect();
    if (items.len() - 1) % stride != 0 {
        out.push(items[items.len() - 1].clone());
    }
    (stride, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerReply {
    pub experiment_id: String,
    pub status: Status,
    pub t: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub experiment_id: Option<String>,
    pub status: Option<Status>,
    pub t: Option<u64>,
    pub error: ErrorBody,
}

/// Query string of the report endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportQuery {
    pub level: Option<f64>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_series_are_untouched() {
        let xs: Vec<u32> = (0..1000).collect();
        assert_eq!(decimate(&xs, 1000), (1, xs.clone()));
    }

    #[test]
    fn long_series_are_strided_and_end_at_the_latest() {
        let xs: Vec<u32> = (0..2500).collect();
        let (stride, out) = decimate(&xs, 1000);
        assert_eq!(stride, 3);
        assert_eq!(out[..3], [0, 3, 6]);
        assert_eq!(*out.last().unwrap(), 2499);
        assert!(out.len() <= 1001);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
    }
}

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::bandit::{BatchStats, PosteriorGrid};
use crate::sim::LogRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Draft,
    Running,
    Paused,
    Stopped,
    Completed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Operator lifecycle commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Start,
    Pause,
    Resume,
    Stop,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" => Some(Command::Start),
            "pause" => Some(Command::Pause),
            "resume" => Some(Command::Resume),
            "stop" => Some(Command::Stop),
            _ => None,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Start => "start",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Stop => "stop",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Operator,
    MaxBatches,
}

/// Outcome of a lifecycle command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Status,
    pub to: Status,
    /// `false` when the command already matched the current state.
    pub changed: bool,
}

/// Named stream ids for the experiment's independent random streams.
pub(crate) mod streams {
    pub const ARRIVALS: u64 = 1;
    pub const OUTCOMES: u64 = 2;
    pub const ALLOCATION: u64 = 3;
    pub const PHI: u64 = 4;
    pub const REFERENCE: u64 = 5;
    pub const REPORT: u64 = 6;
}

/// Word positions of the per-experiment random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCursors {
    pub seed: u64,
    pub arrivals: u128,
    pub outcomes: u128,
    pub allocation: u128,
    pub phi: u128,
}

impl RngCursors {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            arrivals: 0,
            outcomes: 0,
            allocation: 0,
            phi: 0,
        }
    }
}

/// ChaCha8 stream `stream` of `seed`, positioned at `word_pos`.
pub fn stream_rng(seed: u64, stream: u64, word_pos: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    rng
}

/// Cumulative per-cell counters, cell-major (`r * J + j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub creatives: usize,
    pub contexts: usize,
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    pub cost: Vec<f64>,
    pub arrivals: u64,
    pub out_of_context: u64,
}

impl Counters {
    pub fn new(creatives: usize, contexts: usize) -> Self {
        Self {
            creatives,
            contexts,
            impressions: vec![0; creatives * contexts],
            clicks: vec![0; creatives * contexts],
            cost: vec![0.0; creatives * contexts],
            arrivals: 0,
            out_of_context: 0,
        }
    }

    /// Folds one batch's records; `arrivals` counts users in and out of context.
    pub fn fold(&mut self, records: &[LogRecord<f64>], arrivals: u64, context_of: impl Fn(u32) -> usize) {
        for rec in records {
            let cell = rec.creative * self.contexts + context_of(rec.da_id);
            self.impressions[cell] += 1;
            self.clicks[cell] += u64::from(rec.clicked);
            self.cost[cell] += rec.cost;
        }
        self.arrivals += arrivals;
        self.out_of_context += arrivals - records.len() as u64;
    }

    pub fn total_impressions(&self) -> u64 {
        self.impressions.iter().sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.clicks.iter().sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.iter().sum()
    }

    /// Impressions per context, summed over creatives.
    pub fn context_impressions(&self) -> Vec<u64> {
        (0..self.contexts)
            .map(|j| (0..self.creatives).map(|r| self.impressions[r * self.contexts + j]).sum())
            .collect()
    }
}

/// Folds log records into per-cell batch statistics.
pub fn aggregate_logs(
    records: &[LogRecord<f64>],
    creatives: usize,
    contexts: usize,
    arrivals: u64,
    context_of: impl Fn(u32) -> usize,
) -> BatchStats {
    let mut stats = BatchStats::new(creatives, contexts);
    for rec in records {
        stats.record(rec.creative, context_of(rec.da_id), rec.clicked == 1);
    }
    stats.arrivals = arrivals;
    stats
}

/// Best-combination probabilities evaluated after batch `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiRecord {
    pub t: u64,
    /// `[r][k]`
    pub phi: Vec<Vec<f64>>,
    pub max_phi: f64,
    pub best_creative: usize,
    pub best_audience: usize,
}

/// First batch at which some combination crossed the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: u64,
    pub creative: usize,
    pub audience: usize,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Transition { t: u64, command: Command, from: Status, to: Status },
    ThresholdCrossed { t: u64, creative: usize, audience: usize, phi: f64 },
    /// Placeholder for pushing the winner into a live campaign.
    ApplyWinner { t: u64, creative: usize, audience: usize },
    MaxBatchesReached { t: u64 },
}

/// Mutable state of one experiment between batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub status: Status,
    /// Operator chose to keep serving after the threshold was crossed.
    pub continuing: bool,
    pub grid: PosteriorGrid<f64>,
    pub counters: Counters,
    pub history: Vec<PhiRecord>,
    pub crossing: Option<Crossing>,
    pub stop_reason: Option<StopReason>,
    pub rng: RngCursors,
    pub events: Vec<Event>,
}

impl ExperimentState {
    pub fn new(grid: PosteriorGrid<f64>, seed: u64) -> Self {
        let counters = Counters::new(grid.creatives(), grid.contexts());
        Self {
            status: Status::Draft,
            continuing: false,
            grid,
            counters,
            history: Vec::new(),
            crossing: None,
            stop_reason: None,
            rng: RngCursors::new(seed),
            events: Vec::new(),
        }
    }

    /// Batch index the posterior will serve next.
    pub fn t(&self) -> u64 {
        self.grid.batch()
    }

    pub fn batches_run(&self) -> u64 {
        self.grid.batch() - 1
    }

    pub fn threshold_crossed(&self) -> bool {
        self.crossing.is_some()
    }

    /// Whether the batch loop may advance.
    pub fn is_runnable(&self) -> bool {
        self.status == Status::Running || (self.status == Status::Completed && self.continuing)
    }

    pub fn latest_phi(&self) -> Option<&PhiRecord> {
        self.history.last()
    }

    /// Applies a lifecycle command; repeating one that already holds is a no-op.
    pub fn apply(&mut self, command: Command, max_batches: u64) -> Result<Transition, EngineError> {
        use Status::*;
        let from = self.status;
        let invalid = || EngineError::InvalidTransition { from, command };
        let changed = match (command, from) {
            (Command::Start, Draft) => {
                self.status = Running;
                true
            }
            (Command::Start, Running) => false,
            (Command::Pause, Running) => {
                self.status = Paused;
                true
            }
            (Command::Pause, Paused) => false,
            (Command::Resume, Paused) => {
                self.status = Running;
                true
            }
            (Command::Resume, Running) => false,
            (Command::Stop, Running | Paused) => {
                self.status = Stopped;
                self.stop_reason = Some(StopReason::Operator);
                true
            }
            (Command::Stop, Stopped) => false,
            // Completed stays Completed; commands only toggle continuation.
            (Command::Resume, Completed) => {
                if !self.continuing && self.batches_run() >= max_batches {
                    return Err(invalid());
                }
                !std::mem::replace(&mut self.continuing, true)
            }
            (Command::Pause | Command::Stop, Completed) => std::mem::replace(&mut self.continuing, false),
            _ => return Err(invalid()),
        };
        if changed {
            self.events.push(Event::Transition {
                t: self.t(),
                command,
                from,
                to: self.status,
            });
        }
        Ok(Transition {
            from,
            to: self.status,
            changed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> ExperimentState {
        ExperimentState::new(PosteriorGrid::new(2, 1).unwrap(), 1)
    }

    #[test]
    fn legal_path() {
        let mut s = state();
        assert!(s.apply(Command::Start, 10).unwrap().changed);
        assert!(s.apply(Command::Pause, 10).unwrap().changed);
        assert_eq!(s.status, Status::Paused);
        assert!(s.apply(Command::Resume, 10).unwrap().changed);
        assert!(s.apply(Command::Stop, 10).unwrap().changed);
        assert_eq!(s.status, Status::Stopped);
        assert_eq!(s.stop_reason, Some(StopReason::Operator));
        assert_eq!(s.events.len(), 4);
    }

    #[test]
    fn illegal_transitions() {
        let mut s = state();
        for c in [Command::Pause, Command::Resume, Command::Stop] {
            assert!(matches!(s.apply(c, 10), Err(EngineError::InvalidTransition { .. })));
        }
        s.apply(Command::Start, 10).unwrap();
        s.apply(Command::Stop, 10).unwrap();
        assert!(s.apply(Command::Resume, 10).is_err());
        assert!(s.apply(Command::Start, 10).is_err());
    }

    #[test]
    fn repeats_are_noops() {
        let mut s = state();
        s.apply(Command::Start, 10).unwrap();
        let t = s.apply(Command::Start, 10).unwrap();
        assert!(!t.changed);
        s.apply(Command::Stop, 10).unwrap();
        assert!(!s.apply(Command::Stop, 10).unwrap().changed);
        assert_eq!(s.events.len(), 2);
    }

    #[test]
    fn completed_toggles_continuation() {
        let mut s = state();
        s.status = Status::Completed;
        assert!(!s.is_runnable());
        assert!(s.apply(Command::Resume, 10).unwrap().changed);
        assert!(s.is_runnable());
        assert_eq!(s.status, Status::Completed);
        assert!(s.apply(Command::Stop, 10).unwrap().changed);
        assert!(!s.is_runnable());
        assert!(!s.apply(Command::Stop, 10).unwrap().changed);
        assert!(s.apply(Command::Start, 10).is_err());
    }
}

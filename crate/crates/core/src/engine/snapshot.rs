//! Line-oriented snapshot file with an integrity trailer.
//!
//! ```text
//! adlift-snapshot v1
//! {"config_hash":..,"t":..,"status":..,"rng":{..}}       header
//! {..experiment config..}
//! {"experiment_id":..,"t":..,"R":..,"J":..,"gamma":..}   posterior header
//! {"r":0,"j":0,"alpha":..,"beta":..}                     one line per cell
//! {..cumulative counters..}
//! {..lifecycle: status, history, crossing, events..}
//! sha256 <hex digest of every preceding byte>
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{CellRecord, PosteriorGrid, PosteriorHeader, PosteriorSnapshot};

use super::config::ExperimentConfig;
use super::experiment::Experiment;
use super::state::{Counters, Crossing, Event, ExperimentState, PhiRecord, RngCursors, Status, StopReason};
use super::EngineError;

const MAGIC: &str = "adlift-snapshot v1";
const TRAILER: &str = "sha256 ";

#[derive(Serialize, Deserialize)]
struct Header {
    config_hash: String,
    t: u64,
    status: Status,
    rng: RngCursors,
}

#[derive(Serialize, Deserialize)]
struct Lifecycle {
    status: Status,
    continuing: bool,
    stop_reason: Option<StopReason>,
    crossing: Option<Crossing>,
    history: Vec<PhiRecord>,
    events: Vec<Event>,
}

/// Serializes the experiment between batches.
pub fn snapshot(exp: &Experiment) -> String {
    let state = exp.state();
    let config = exp.config();
    let mut body = String::new();
    let mut line = |value: &dyn erased::Json| {
        body.push_str(&value.to_json());
        body.push('\n');
    };
    line(&Header {
        config_hash: config.hash(),
        t: state.t(),
        status: state.status,
        rng: state.rng,
    });
    line(config);
    let posterior = state.grid.snapshot(&config.experiment_id, config.gamma);
    line(&posterior.header);
    for cell in &posterior.cells {
        line(cell);
    }
    line(&state.counters);
    line(&Lifecycle {
        status: state.status,
        continuing: state.continuing,
        stop_reason: state.stop_reason,
        crossing: state.crossing.clone(),
        history: state.history.clone(),
        events: state.events.clone(),
    });
    let mut text = format!("{MAGIC}\n{body}");
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    text.push_str(TRAILER);
    text.push_str(&digest);
    text.push('\n');
    text
}

/// Inverse of [`snapshot`]; any truncation, edit or schema drift is
/// reported as `CorruptSnapshot`.
pub fn restore(text: &str) -> Result<Experiment, EngineError> {
    let corrupt = |msg: &str| EngineError::CorruptSnapshot(msg.to_owned());
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("missing trailer"))?;
    let (body, trailer) = text.split_at(body_end);
    let digest = trailer
        .trim_end_matches('\n')
        .strip_prefix(TRAILER)
        .ok_or_else(|| corrupt("missing checksum trailer"))?;
    if hex::encode(Sha256::digest(body.as_bytes())) != digest {
        return Err(corrupt("checksum mismatch"));
    }

    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("unknown snapshot format"));
    }
    let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(&format!("missing {what}")));
    let parse_err = |what: &str, e: serde_json::Error| corrupt(&format!("{what}: {e}"));

    let header: Header = serde_json::from_str(next("header")?).map_err(|e| parse_err("header", e))?;
    let config: ExperimentConfig =
        serde_json::from_str(next("config")?).map_err(|e| parse_err("config", e))?;
    if config.hash() != header.config_hash {
        return Err(corrupt("config hash mismatch"));
    }
    let post_header: PosteriorHeader<f64> =
        serde_json::from_str(next("posterior header")?).map_err(|e| parse_err("posterior header", e))?;
    let mut cells = Vec::with_capacity(post_header.creatives * post_header.contexts);
    for _ in 0..post_header.creatives * post_header.contexts {
        let cell: CellRecord<f64> =
            serde_json::from_str(next("posterior cell")?).map_err(|e| parse_err("posterior cell", e))?;
        cells.push(cell);
    }
    let grid = PosteriorGrid::from_snapshot(&PosteriorSnapshot {
        header: post_header,
        cells,
    })
    .map_err(|e| corrupt(&e.to_string()))?;
    let counters: Counters = serde_json::from_str(next("counters")?).map_err(|e| parse_err("counters", e))?;
    let life: Lifecycle = serde_json::from_str(next("lifecycle")?).map_err(|e| parse_err("lifecycle", e))?;
    if next("end").is_ok() {
        return Err(corrupt("trailing data"));
    }
    if grid.batch() != header.t || life.status != header.status {
        return Err(corrupt("header disagrees with body"));
    }

    let state = ExperimentState {
        status: life.status,
        continuing: life.continuing,
        grid,
        counters,
        history: life.history,
        crossing: life.crossing,
        stop_reason: life.stop_reason,
        rng: header.rng,
        events: life.events,
    };
    Experiment::with_state(config, state).map_err(|e| match e {
        EngineError::CorruptSnapshot(m) => EngineError::CorruptSnapshot(m),
        other => EngineError::CorruptSnapshot(other.to_string()),
    })
}

mod erased {
    use serde::Serialize;

    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("snapshot section serializes")
        }
    }
}

//! Experiment registry shared by the HTTP handlers and the scheduler.
//!
//! Each experiment has an engine behind an async mutex, held for the whole of
//! a batch or a command, so commands land between batches in arrival order.
//! Readers never take that lock: they see the copy published after the last
//! completed batch or command.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use adlift_core::engine::{Command, Experiment, ExperimentConfig, Report, ReportOptions};
use adlift_core::bandit::{DEFAULT_DRAWS, DEFAULT_LEVEL};
use axum::http::StatusCode;
use tokio::sync::Mutex;
use tokio::task::JoinSet;

use crate::error::ApiError;
use crate::store::Store;
use crate::wire::{CommandReply, HistoryReply, ListReply, ReportQuery, Summary, WinnerReply};

/// Upper bound on Monte Carlo draws a report request may ask for.
pub const MAX_REPORT_DRAWS: usize = 1_000_000;
const MAX_ID_LEN: usize = 64;

struct Slot {
    engine: Arc<Mutex<Experiment>>,
    published: RwLock<Arc<Experiment>>,
}

impl Slot {
    fn new(exp: Experiment) -> Self {
        let published = RwLock::new(Arc::new(exp.clone()));
        Self {
            engine: Arc::new(Mutex::new(exp)),
            published,
        }
    }

    fn view(&self) -> Arc<Experiment> {
        self.published.read().expect("publish lock").clone()
    }

    fn publish(&self, exp: Experiment) {
        *self.published.write().expect("publish lock") = Arc::new(exp);
    }
}

pub struct Service {
    experiments: RwLock<BTreeMap<String, Arc<Slot>>>,
    store: Option<Store>,
    next_id: AtomicU64,
}

impl Service {
    pub fn new(store: Option<Store>) -> Arc<Self> {
        Arc::new(Self {
            experiments: RwLock::new(BTreeMap::new()),
            store,
            next_id: AtomicU64::new(1),
        })
    }

    /// Opens `store` and registers every experiment found in it.
    pub fn load(store: Store) -> std::io::Result<Arc<Self>> {
        let (loaded, failed) = store.load_all()?;
        for (path, err) in failed {
            tracing::warn!(path = %path.display(), %err, "skipping unreadable snapshot");
        }
        let svc = Self::new(Some(store));
        {
            let mut map = svc.experiments.write().expect("registry lock");
            for exp in loaded {
                tracing::info!(id = exp.id(), status = %exp.status(), t = exp.state().t(), "restored");
                map.insert(exp.id().to_owned(), Arc::new(Slot::new(exp)));
            }
        }
        Ok(svc)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.experiments
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn fresh_id(&self) -> String {
        let map = self.experiments.read().expect("registry lock");
        loop {
            let id = format!("exp-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
            if !map.contains_key(&id) {
                return id;
            }
        }
    }

    fn persist(&self, exp: &Experiment) -> Result<(), ApiError> {
        if let Some(store) = &self.store {
            store
                .save(exp)
                .map_err(|e| ApiError::internal(format!("saving snapshot: {e}")).about(exp))?;
        }
        Ok(())
    }

    /// Registers a Draft experiment. An empty `experiment_id` gets a
    /// generated one.
    pub async fn create(&self, mut config: ExperimentConfig) -> Result<Summary, ApiError> {
        if config.experiment_id.is_empty() {
            config.experiment_id = self.fresh_id();
        }
        check_id(&config.experiment_id)?;
        if self.experiments.read().expect("registry lock").contains_key(&config.experiment_id) {
            return Err(duplicate(&config.experiment_id));
        }
        // building p_hat from a reference sample can take a while
        let exp = tokio::task::spawn_blocking(move || Experiment::new(config))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let summary = Summary::of(&exp);
        {
            let mut map = self.experiments.write().expect("registry lock");
            if map.contains_key(exp.id()) {
                return Err(duplicate(exp.id()));
            }
            self.persist(&exp)?;
            map.insert(exp.id().to_owned(), Arc::new(Slot::new(exp)));
        }
        Ok(summary)
    }

    pub async fn command(&self, id: &str, command: Command) -> Result<CommandReply, ApiError> {
        let slot = self.slot(id)?;
        let mut exp = slot.engine.lock().await;
        let transition = exp.command(command).map_err(|e| ApiError::from(e).about(&exp))?;
        if transition.changed {
            self.persist(&exp)?;
            slot.publish(exp.clone());
        }
        Ok(CommandReply {
            experiment_id: exp.id().to_owned(),
            status: exp.status(),
            t: exp.state().t(),
            command,
            transition,
            continuing: exp.state().continuing,
        })
    }

    pub async fn apply_winner(&self, id: &str) -> Result<WinnerReply, ApiError> {
        let slot = self.slot(id)?;
        let mut exp = slot.engine.lock().await;
        let event = exp.apply_winner().map_err(|e| ApiError::from(e).about(&exp))?;
        self.persist(&exp)?;
        slot.publish(exp.clone());
        Ok(WinnerReply {
            experiment_id: exp.id().to_owned(),
            status: exp.status(),
            t: exp.state().t(),
            event,
        })
    }

    pub fn summary(&self, id: &str) -> Result<Summary, ApiError> {
        Ok(Summary::of(&self.slot(id)?.view()))
    }

    pub fn list(&self) -> ListReply {
        let slots: Vec<_> = self.experiments.read().expect("registry lock").values().cloned().collect();
        ListReply {
            experiment_id: None,
            status: None,
            t: None,
            experiments: slots.iter().map(|s| Summary::of(&s.view())).collect(),
        }
    }

    pub fn history(&self, id: &str) -> Result<HistoryReply, ApiError> {
        Ok(HistoryReply::of(&self.slot(id)?.view()))
    }

    /// Report on the latest published state.
    pub async fn report(&self, id: &str, query: ReportQuery) -> Result<Report, ApiError> {
        let view = self.slot(id)?.view();
        let opts = ReportOptions {
            level: query.level.unwrap_or(DEFAULT_LEVEL),
            draws: query.draws.unwrap_or(DEFAULT_DRAWS),
            seed: query.seed,
        };
        if opts.draws > MAX_REPORT_DRAWS {
            return Err(ApiError::bad_request(
                "InvalidQuery",
                format!("draws must be at most {MAX_REPORT_DRAWS}"),
            )
            .about(&view));
        }
        tokio::task::spawn_blocking(move || Report::generate(&view, &opts).map_err(|e| ApiError::from(e).about(&view)))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }

    /// Runs one batch if the experiment is runnable; returns the batch index.
    pub async fn advance(self: &Arc<Self>, id: &str) -> Result<Option<u64>, ApiError> {
        let slot = self.slot(id)?;
        let guard = slot.engine.clone().lock_owned().await;
        if !guard.state().is_runnable() {
            return Ok(None);
        }
        let svc = self.clone();
        let (t, published) = tokio::task::spawn_blocking(move || {
            let mut exp = guard;
            let outcome = exp.run_batch().map_err(|e| ApiError::from(e).about(&exp))?;
            if let Some(store) = &svc.store {
                store
                    .append_log(exp.id(), &outcome.records)
                    .map_err(|e| ApiError::internal(format!("appending log: {e}")).about(&exp))?;
            }
            svc.persist(&exp)?;
            Ok::<_, ApiError>((outcome.t, exp.clone()))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        slot.publish(published);
        Ok(Some(t))
    }

    /// One scheduler tick: a batch for every runnable experiment, run
    /// concurrently across experiments.
    pub async fn tick(self: &Arc<Self>) -> usize {
        let runnable: Vec<String> = {
            let map = self.experiments.read().expect("registry lock");
            map.iter()
                .filter(|(_, slot)| slot.view().state().is_runnable())
                .map(|(id, _)| id.clone())
                .collect()
        };
        let mut tasks = JoinSet::new();
        for id in runnable {
            let svc = self.clone();
            tasks.spawn(async move {
                let res = svc.advance(&id).await;
                (id, res)
            });
        }
        let mut ran = 0;
        while let Some(joined) = tasks.join_next().await {
            match joined {
                Ok((_, Ok(Some(_)))) => ran += 1,
                Ok((_, Ok(None))) => {}
                Ok((id, Err(e))) => tracing::error!(%id, code = %e.code, message = %e.message, "batch failed"),
                Err(e) => tracing::error!(%e, "batch task panicked"),
            }
        }
        ran
    }

    /// Drives [`Service::tick`] every `period` until the task is dropped.
    pub fn spawn_scheduler(self: &Arc<Self>, period: Duration) -> tokio::task::JoinHandle<()> {
        let svc = self.clone();
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                svc.tick().await;
            }
        })
    }
}

fn duplicate(id: &str) -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "DuplicateExperiment", format!("experiment {id:?} already exists"))
}

/// Ids name files in the data directory, so keep them to a safe alphabet.
fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = id.len() <= MAX_ID_LEN
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        && !id.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(
            "InvalidExperimentId",
            format!("experiment_id must be 1-{MAX_ID_LEN} of [A-Za-z0-9_-]"),
        ))
    }
}

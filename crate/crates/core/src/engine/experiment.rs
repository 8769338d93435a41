use crate::audience::{self, ContextProbabilities, Partition};
use crate::bandit::{self, BatchStats, BestProbMatrix, PayoffModel, PosteriorGrid, PosteriorSampler};
use crate::sim::{self, GroundTruth, LogRecord, Population};

use super::config::{ContextProbSource, ExperimentConfig, ExperimentKind, PopulationConfig};
use super::metrics::{self, MetricError};
use super::state::{
    aggregate_logs, stream_rng, streams, Command, Crossing, Event, ExperimentState, PhiRecord, Status,
    StopReason, Transition,
};
use super::EngineError;

/// Reference-sample size used for feature-level populations when the config
/// does not give one.
pub const DEFAULT_REFERENCE_SAMPLE: usize = 100_000;

/// One experiment: immutable setup derived from the config plus the
/// mutable [`ExperimentState`].
///
/// Everything is a deterministic function of the config (including its seed),
/// so the setup is rebuilt rather than persisted.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    partition: Partition,
    probs: ContextProbabilities<f64>,
    payoff: PayoffModel<f64>,
    truth: GroundTruth<f64>,
    state: ExperimentState,
}

/// What one batch produced.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub t: u64,
    pub records: Vec<LogRecord<f64>>,
    pub stats: BatchStats,
    pub phi: BestProbMatrix<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, EngineError> {
        config.validate().map_err(EngineError::Validation)?;
        let partition = audience::partition(&config.target_audiences)?;
        let creatives = config.creatives.len();
        let contexts = partition.len();

        let population = match &config.scenario.population {
            PopulationConfig::Contexts { weights, no_context } => Population::Contexts {
                weights: weights.clone(),
                no_context: *no_context,
            },
            PopulationConfig::Features { features } => Population::Features {
                model: sim::FeatureModel {
                    features: features.clone(),
                },
                audiences: config.target_audiences.clone(),
                partition: partition.clone(),
            },
        };
        let truth = GroundTruth::new(
            &config.scenario.theta_star,
            config.scenario.costs.as_deref(),
            population,
        )?;

        let probs = match &config.context_probs {
            ContextProbSource::Table { p_hat } => ContextProbabilities::from_table(&partition, p_hat)?,
            ContextProbSource::ReferenceSample { users } => {
                audience::estimate_context_probs(users, &config.target_audiences, &partition)?
            }
            ContextProbSource::Scenario { sample_size } => match truth.population() {
                Population::Contexts { weights, .. } => {
                    ContextProbabilities::from_weights(&partition, weights)?
                }
                Population::Features { model, .. } => {
                    let mut rng = stream_rng(config.scenario.seed, streams::REFERENCE, 0);
                    let n = sample_size.unwrap_or(DEFAULT_REFERENCE_SAMPLE);
                    let sample: Vec<_> = (0..n).map(|_| model.sample(&mut rng)).collect();
                    audience::estimate_context_probs(&sample, &config.target_audiences, &partition)?
                }
            },
        };

        let payoff = match &config.display_costs {
            Some(costs) => PayoffModel::new(config.gamma, costs)?,
            None => PayoffModel::new(config.gamma, &vec![vec![0.0; contexts]; creatives])?,
        };
        // The arm cap applies to creative x TA combinations, checked in
        // validation; the DA grid may hold up to R * (2^K - 1) cells.
        let grid = PosteriorGrid::with_cap(creatives, contexts, creatives * contexts)?;
        let state = ExperimentState::new(grid, config.scenario.seed);
        Ok(Self {
            config,
            partition,
            probs,
            payoff,
            truth,
            state,
        })
    }

    /// Rebuilds the setup from `config` and installs a saved state.
    pub fn with_state(config: ExperimentConfig, state: ExperimentState) -> Result<Self, EngineError> {
        let mut exp = Self::new(config)?;
        let g = &state.grid;
        if g.creatives() != exp.creatives()
            || g.contexts() != exp.contexts()
            || state.counters.creatives != exp.creatives()
            || state.counters.contexts != exp.contexts()
        {
            return Err(EngineError::StateMismatch("grid shape differs from config".into()));
        }
        exp.state = state;
        Ok(exp)
    }

    pub fn id(&self) -> &str {
        &self.config.experiment_id
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn kind(&self) -> ExperimentKind {
        self.config.kind()
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn status(&self) -> Status {
        self.state.status
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn probs(&self) -> &ContextProbabilities<f64> {
        &self.probs
    }

    pub fn payoff(&self) -> &PayoffModel<f64> {
        &self.payoff
    }

    pub fn truth(&self) -> &GroundTruth<f64> {
        &self.truth
    }

    pub fn creatives(&self) -> usize {
        self.config.creatives.len()
    }

    pub fn contexts(&self) -> usize {
        self.partition.len()
    }

    pub fn audiences(&self) -> usize {
        self.partition.audience_count()
    }

    pub fn set_id(&mut self, id: &str) {
        self.config.experiment_id = id.to_owned();
    }

    pub fn command(&mut self, command: Command) -> Result<Transition, EngineError> {
        self.state.apply(command, self.config.scenario.max_batches)
    }

    pub fn start(&mut self) -> Result<Transition, EngineError> {
        self.command(Command::Start)
    }

    pub fn pause(&mut self) -> Result<Transition, EngineError> {
        self.command(Command::Pause)
    }

    pub fn resume(&mut self) -> Result<Transition, EngineError> {
        self.command(Command::Resume)
    }

    pub fn stop(&mut self) -> Result<Transition, EngineError> {
        self.command(Command::Stop)
    }

    /// Records the operator's request to roll the winner out. Only legal
    /// once some combination has crossed the threshold.
    pub fn apply_winner(&mut self) -> Result<Event, EngineError> {
        let crossing = self.state.crossing.clone().ok_or(EngineError::ThresholdNotCrossed)?;
        let event = Event::ApplyWinner {
            t: self.state.t(),
            creative: crossing.creative,
            audience: crossing.audience,
        };
        self.state.events.push(event.clone());
        Ok(event)
    }

    fn context_of(&self) -> impl Fn(u32) -> usize + '_ {
        |da_id| self.partition.context_index(da_id).expect("logged DA is in partition")
    }

    /// Serve, log, aggregate, update, evaluate, check the threshold.
    pub fn run_batch(&mut self) -> Result<BatchOutcome, EngineError> {
        if !self.state.is_runnable() {
            return Err(EngineError::InvalidStatus(self.state.status));
        }
        let t = self.state.t();
        let cursors = self.state.rng;
        let mut arrivals_rng = stream_rng(cursors.seed, streams::ARRIVALS, cursors.arrivals);
        let mut outcomes_rng = stream_rng(cursors.seed, streams::OUTCOMES, cursors.outcomes);
        let mut allocation_rng = stream_rng(cursors.seed, streams::ALLOCATION, cursors.allocation);
        let mut phi_rng = stream_rng(cursors.seed, streams::PHI, cursors.phi);

        let batch_size = self.config.scenario.batch_size;
        let arrivals = sim::sample_batch(&self.truth, batch_size, &mut arrivals_rng)?;
        let sampler = PosteriorSampler::from_grid(&self.state.grid);
        let mut records = Vec::with_capacity(arrivals.len());
        for arrival in &arrivals {
            let Some(j) = arrival.context else { continue };
            let r = sampler.choose_creative(&self.payoff, j, &mut allocation_rng);
            let (clicked, cost) = sim::realize_outcome(&self.truth, j, r, &mut outcomes_rng);
            records.push(LogRecord {
                t,
                i: arrival.ordinal,
                da_id: self.partition.das()[j].da_id,
                creative: r,
                clicked: u8::from(clicked),
                cost,
            });
        }

        let (creatives, contexts) = (self.creatives(), self.contexts());
        let stats = aggregate_logs(&records, creatives, contexts, batch_size, self.context_of());
        let mut grid = self.state.grid.clone();
        grid.update(&stats)?;
        let phi = bandit::best_combo_probability(
            &grid,
            &self.payoff,
            &self.probs,
            self.config.draws,
            &mut phi_rng,
        )?;

        let mut counters = self.state.counters.clone();
        counters.fold(&records, batch_size, self.context_of());
        let state = &mut self.state;
        state.grid = grid;
        state.counters = counters;
        let (best_creative, best_audience, max_phi) = phi.best();
        state.history.push(PhiRecord {
            t,
            phi: phi.phi_rows(),
            max_phi,
            best_creative,
            best_audience,
        });

        if state.status == Status::Running && max_phi >= self.config.threshold {
            state.status = Status::Completed;
            state.crossing = Some(Crossing {
                t,
                creative: best_creative,
                audience: best_audience,
                phi: max_phi,
            });
            state.events.push(Event::ThresholdCrossed {
                t,
                creative: best_creative,
                audience: best_audience,
                phi: max_phi,
            });
        }
        if state.batches_run() >= self.config.scenario.max_batches && state.is_runnable() {
            if state.status == Status::Running {
                state.status = Status::Stopped;
                state.stop_reason = Some(StopReason::MaxBatches);
            }
            state.continuing = false;
            state.events.push(Event::MaxBatchesReached { t });
        }

        state.rng.arrivals = arrivals_rng.get_word_pos();
        state.rng.outcomes = outcomes_rng.get_word_pos();
        state.rng.allocation = allocation_rng.get_word_pos();
        state.rng.phi = phi_rng.get_word_pos();

        Ok(BatchOutcome {
            t,
            records,
            stats,
            phi,
        })
    }

    /// Starts a draft and runs batches until the loop halts, handing each
    /// batch's records to `sink`.
    pub fn run_to_completion(
        &mut self,
        mut sink: impl FnMut(&BatchOutcome),
    ) -> Result<(), EngineError> {
        if self.state.status == Status::Draft {
            self.start()?;
        }
        while self.state.is_runnable() {
            let outcome = self.run_batch()?;
            sink(&outcome);
        }
        Ok(())
    }

    /// Posterior-mean CTR per combination, `r * K + k`; `None` where the
    /// combination has no impressions.
    pub fn combination_ctrs(&self) -> Vec<Option<f64>> {
        let means = self.state.grid.means();
        let contexts = self.contexts();
        let mut out = Vec::new();
        for r in 0..self.creatives() {
            let row = &means[r * contexts..(r + 1) * contexts];
            for k in 0..self.audiences() {
                let shown: u64 = self
                    .probs
                    .overlap(k)
                    .iter()
                    .map(|&j| self.state.counters.impressions[r * contexts + j])
                    .sum();
                out.push((shown > 0).then(|| self.probs.aggregate(row, k)));
            }
        }
        out
    }

    /// Best-combination CTR over the mean CTR of all combinations.
    pub fn value_of_experimentation(&self) -> Result<f64, MetricError> {
        let ctrs: Option<Vec<f64>> = self.combination_ctrs().into_iter().collect();
        let ctrs = ctrs.ok_or_else(|| {
            MetricError::DegenerateReport("some combination has no impressions".into())
        })?;
        metrics::value_of_experimentation(&ctrs)
    }

    /// Equal-allocation counterfactual clicks from this run.
    pub fn counterfactual_clicks(&self) -> Result<f64, MetricError> {
        metrics::counterfactual_clicks(
            &self.state.counters.context_impressions(),
            &self.state.grid.means(),
            self.creatives(),
        )
    }

    /// Observed clicks over equal-allocation counterfactual clicks.
    pub fn value_of_adaptive_design(&self) -> Result<f64, MetricError> {
        metrics::value_of_adaptive_design(
            &self.state.counters.context_impressions(),
            &self.state.grid.means(),
            self.creatives(),
            self.state.counters.total_clicks(),
        )
    }
}

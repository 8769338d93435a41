//! Reports derived from a posterior snapshot.
//!
//! A report is a pure function of the experiment (config + state) and the
//! report options; the Monte Carlo parts draw from a dedicated stream keyed
//! by the report seed and the batch index.

use serde::{Deserialize, Serialize};

use crate::audience::Signature;
use crate::bandit::{self, PosteriorSnapshot, DEFAULT_DRAWS, DEFAULT_LEVEL};

use super::config::ExperimentKind;
use super::experiment::Experiment;
use super::state::{stream_rng, streams, Crossing, Status, StopReason};
use super::EngineError;

/// How per-creative and per-audience marginals are credited.
pub const MARGINAL_RULE: &str = "per draw, a creative scores its best audience payoff and an \
audience its best creative payoff; the argmax creative / audience is credited";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub level: f64,
    pub draws: usize,
    /// Defaults to the experiment seed.
    pub seed: Option<u64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            draws: DEFAULT_DRAWS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub status: Status,
    pub continuing: bool,
    pub t: u64,
    pub batches_run: u64,
    pub threshold: f64,
    pub threshold_crossed: bool,
    pub crossing: Option<Crossing>,
    pub stop_reason: Option<StopReason>,
    pub is_final: bool,
    pub level: f64,
    pub draws: usize,
    pub report_seed: u64,
    pub max_phi: f64,
    pub best: BestCombination,
    pub combinations: Vec<CombinationRow>,
    pub cells: Vec<CellRow>,
    pub creatives: Vec<MarginalRow>,
    pub audiences: Vec<MarginalRow>,
    pub creative_by_audience: Vec<AudienceBreakdown>,
    pub totals: Totals,
    pub value: Option<ValueMetrics>,
    pub marginal_rule: String,
    pub posterior: PosteriorSnapshot<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCombination {
    pub creative_index: usize,
    pub creative: String,
    pub audience_id: u32,
    pub audience: String,
    pub phi: f64,
}

/// One creative x TA combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationRow {
    pub creative_index: usize,
    pub creative: String,
    pub audience_id: u32,
    pub audience: String,
    pub ctr: f64,
    pub ci: [f64; 2],
    pub phi: f64,
    pub impressions: u64,
    pub clicks: u64,
    pub cost: f64,
}

/// One creative x DA posterior cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub creative_index: usize,
    pub creative: String,
    pub da_id: u32,
    pub signature: Signature,
    pub alpha: f64,
    pub beta: f64,
    pub ctr: f64,
    pub ci: [f64; 2],
    /// Current Thompson allocation probability within the DA.
    pub allocation_weight: f64,
    pub impressions: u64,
    pub clicks: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub index: usize,
    pub name: String,
    pub best_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudienceBreakdown {
    pub audience_id: u32,
    pub audience: String,
    /// Probability each creative is best within this audience.
    pub creative_best: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub arrivals: u64,
    pub out_of_context: u64,
    pub impressions: u64,
    pub clicks: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMetrics {
    pub value_of_experimentation: Option<f64>,
    pub value_of_adaptive_design: Option<f64>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn generate(exp: &Experiment, opts: &ReportOptions) -> Result<Report, EngineError> {
        let cfg = exp.config();
        let state = exp.state();
        let grid = &state.grid;
        let counters = &state.counters;
        let (creatives, contexts, audiences) = (exp.creatives(), exp.contexts(), exp.audiences());

        let seed = opts.seed.unwrap_or(cfg.scenario.seed);
        let mut rng = stream_rng(seed, streams::REPORT, u128::from(state.t()) << 64);

        let best = bandit::best_combo_probability(grid, exp.payoff(), exp.probs(), opts.draws, &mut rng)?;
        let ta_ci = bandit::ta_credible_intervals(grid, exp.probs(), opts.level, opts.draws, &mut rng)?;
        let mut weights = vec![0.0; creatives * contexts];
        for j in 0..contexts {
            let w = bandit::allocation_weights(grid, exp.payoff(), j, opts.draws, &mut rng)?;
            for (r, wr) in w.into_iter().enumerate() {
                weights[r * contexts + j] = wr;
            }
        }

        let audience_name = |k: usize| {
            cfg.target_audiences
                .iter()
                .find(|ta| ta.id == k as u32 + 1)
                .map(|ta| ta.name.clone())
                .unwrap_or_default()
        };

        let mut combinations = Vec::with_capacity(creatives * audiences);
        for r in 0..creatives {
            for k in 0..audiences {
                let members = exp.probs().overlap(k);
                let sum_u = |v: &[u64]| members.iter().map(|&j| v[r * contexts + j]).sum::<u64>();
                let ci = ta_ci[r * audiences + k];
                combinations.push(CombinationRow {
                    creative_index: r,
                    creative: cfg.creatives[r].clone(),
                    audience_id: k as u32 + 1,
                    audience: audience_name(k),
                    ctr: best.lambda_mean[r * audiences + k],
                    ci: [ci.0, ci.1],
                    phi: best.phi(r, k),
                    impressions: sum_u(&counters.impressions),
                    clicks: sum_u(&counters.clicks),
                    cost: members.iter().map(|&j| counters.cost[r * contexts + j]).sum(),
                });
            }
        }

        let mut cells = Vec::with_capacity(creatives * contexts);
        for r in 0..creatives {
            for (j, da) in exp.partition().das().iter().enumerate() {
                let (a, b) = (grid.alpha(r, j), grid.beta(r, j));
                let ci = bandit::credible_interval(a, b, opts.level)?;
                let cell = r * contexts + j;
                cells.push(CellRow {
                    creative_index: r,
                    creative: cfg.creatives[r].clone(),
                    da_id: da.da_id,
                    signature: da.signature,
                    alpha: a,
                    beta: b,
                    ctr: grid.mean(r, j),
                    ci: [ci.0, ci.1],
                    allocation_weight: weights[cell],
                    impressions: counters.impressions[cell],
                    clicks: counters.clicks[cell],
                    cost: counters.cost[cell],
                });
            }
        }

        let creatives_rows = (0..creatives)
            .map(|r| MarginalRow {
                index: r,
                name: cfg.creatives[r].clone(),
                best_probability: best.creative_best[r],
            })
            .collect();
        let audience_rows = (0..audiences)
            .map(|k| MarginalRow {
                index: k,
                name: audience_name(k),
                best_probability: best.audience_best[k],
            })
            .collect();
        let creative_by_audience = (0..audiences)
            .map(|k| AudienceBreakdown {
                audience_id: k as u32 + 1,
                audience: audience_name(k),
                creative_best: (0..creatives)
                    .map(|r| best.creative_best_by_audience[r * audiences + k])
                    .collect(),
            })
            .collect();

        let is_final = matches!(state.status, Status::Completed | Status::Stopped);
        let value = is_final.then(|| {
            let mut notes = Vec::new();
            let voe = exp
                .value_of_experimentation()
                .map_err(|e| notes.push(format!("value_of_experimentation: {e}")))
                .ok();
            let voad = exp
                .value_of_adaptive_design()
                .map_err(|e| notes.push(format!("value_of_adaptive_design: {e}")))
                .ok();
            ValueMetrics {
                value_of_experimentation: voe,
                value_of_adaptive_design: voad,
                notes,
            }
        });

        let (br, bk, bphi) = best.best();
        Ok(Report {
            experiment_id: cfg.experiment_id.clone(),
            kind: cfg.kind(),
            status: state.status,
            continuing: state.continuing,
            t: state.t(),
            batches_run: state.batches_run(),
            threshold: cfg.threshold,
            threshold_crossed: state.threshold_crossed(),
            crossing: state.crossing.clone(),
            stop_reason: state.stop_reason,
            is_final,
            level: opts.level,
            draws: opts.draws,
            report_seed: seed,
            max_phi: bphi,
            best: BestCombination {
                creative_index: br,
                creative: cfg.creatives[br].clone(),
                audience_id: bk as u32 + 1,
                audience: audience_name(bk),
                phi: bphi,
            },
            combinations,
            cells,
            creatives: creatives_rows,
            audiences: audience_rows,
            creative_by_audience,
            totals: Totals {
                arrivals: counters.arrivals,
                out_of_context: counters.out_of_context,
                impressions: counters.total_impressions(),
                clicks: counters.total_clicks(),
                cost: counters.total_cost(),
            },
            value,
            marginal_rule: MARGINAL_RULE.to_owned(),
            posterior: grid.snapshot(&cfg.experiment_id, cfg.gamma),
        })
    }
}

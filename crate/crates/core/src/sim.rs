//! Synthetic traffic standing in for the ad server and user population.

use std::io::{self, BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audience::{self, AudienceError, FeatureValue, Partition, TargetAudienceDef, UserFeatures};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("ground truth: {0}")]
    InvalidTruth(String),
    #[error("population: {0}")]
    InvalidPopulation(String),
    #[error(transparent)]
    Audience(#[from] AudienceError),
}

/// Per-impression display cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec<S> {
    Fixed { fixed: S },
    /// Symmetric around `mean` within `±spread`, truncated at zero.
    Spread { mean: S, spread: S },
}

impl<S: Scalar> Default for CostSpec<S> {
    fn default() -> Self {
        CostSpec::Fixed { fixed: S::zero() }
    }
}

impl<S: Scalar> CostSpec<S> {
    pub fn mean(&self) -> S {
        match *self {
            CostSpec::Fixed { fixed } => fixed,
            CostSpec::Spread { mean, .. } => mean,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            CostSpec::Fixed { fixed } => fixed >= S::zero() && fixed.is_finite(),
            CostSpec::Spread { mean, spread } => {
                mean >= S::zero() && spread >= S::zero() && (mean + spread).is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidTruth(format!("bad cost spec {self:?}")))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match *self {
            CostSpec::Fixed { fixed } => fixed,
            CostSpec::Spread { mean, spread } => loop {
                let x = mean + spread * (S::lit(2.0) * S::sample_unit(rng) - S::one());
                if x >= S::zero() {
                    break x;
                }
            },
        }
    }
}

/// Distribution of one user feature in feature-level mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FeatureDist {
    Categorical {
        name: String,
        values: Vec<FeatureValue>,
        weights: Vec<f64>,
    },
    Uniform {
        name: String,
        uniform: [f64; 2],
    },
}

/// Independent per-feature distributions, used to generate raw users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub features: Vec<FeatureDist>,
}

impl FeatureModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UserFeatures {
        let mut user = UserFeatures::new();
        for dist in &self.features {
            match dist {
                FeatureDist::Categorical { name, values, weights } => {
                    let i = pick(weights, f64::sample_unit(rng));
                    user = user.with(name, values[i].clone());
                }
                FeatureDist::Uniform { name, uniform } => {
                    let x = uniform[0] + (uniform[1] - uniform[0]) * f64::sample_unit(rng);
                    user = user.with(name, x);
                }
            }
        }
        user
    }

    fn validate(&self) -> Result<(), SimError> {
        for dist in &self.features {
            match dist {
                FeatureDist::Categorical { name, values, weights } => {
                    let total: f64 = weights.iter().sum();
                    if values.is_empty()
                        || values.len() != weights.len()
                        || weights.iter().any(|w| !(*w >= 0.0))
                        || (total - 1.0).abs() > 1e-9
                    {
                        return Err(SimError::InvalidPopulation(format!(
                            "feature `{name}` needs matching values and weights summing to 1"
                        )));
                    }
                }
                FeatureDist::Uniform { name, uniform } => {
                    if !(uniform[0] <= uniform[1]) {
                        return Err(SimError::InvalidPopulation(format!("feature `{name}` has lo > hi")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// How arrivals are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum Population<S> {
    /// Context drawn directly from per-DA weights plus a no-context weight.
    Contexts { weights: Vec<S>, no_context: S },
    /// Raw features generated and assigned through the TA predicates.
    Features {
        model: FeatureModel,
        audiences: Vec<TargetAudienceDef>,
        partition: Partition,
    },
}

/// Simulator ground truth: true CTRs, cost specs and the arrival process.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<S> {
    creatives: usize,
    contexts: usize,
    theta_star: Vec<S>,
    costs: Vec<CostSpec<S>>,
    population: Population<S>,
    cumulative: Vec<S>,
}

impl<S: Scalar> GroundTruth<S> {
    /// `theta_star[r][j]` and `costs[r][j]`; costs default to zero.
    pub fn new(
        theta_star: &[Vec<S>],
        costs: Option<&[Vec<CostSpec<S>>]>,
        population: Population<S>,
    ) -> Result<Self, SimError> {
        let creatives = theta_star.len();
        let contexts = theta_star.first().map_or(0, Vec::len);
        if creatives == 0 || contexts == 0 || theta_star.iter().any(|row| row.len() != contexts) {
            return Err(SimError::InvalidTruth("theta_star must be a nonempty R x J matrix".into()));
        }
        let theta: Vec<S> = theta_star.iter().flatten().copied().collect();
        if theta.iter().any(|&p| !(p >= S::zero() && p <= S::one())) {
            return Err(SimError::InvalidTruth("theta_star values must lie in [0, 1]".into()));
        }
        let costs = match costs {
            None => vec![CostSpec::default(); creatives * contexts],
            Some(rows) => {
                if rows.len() != creatives || rows.iter().any(|row| row.len() != contexts) {
                    return Err(SimError::InvalidTruth("cost spec must be R x J".into()));
                }
                rows.iter().flatten().copied().collect()
            }
        };
        for c in &costs {
            c.validate()?;
        }
        let cumulative = match &population {
            Population::Contexts { weights, no_context } => {
                if weights.len() != contexts {
                    return Err(SimError::InvalidPopulation(format!(
                        "expected {contexts} context weights, got {}",
                        weights.len()
                    )));
                }
                if weights.iter().chain(Some(no_context)).any(|&w| !(w >= S::zero())) {
                    return Err(SimError::InvalidPopulation("weights must be nonnegative".into()));
                }
                let total = weights.iter().fold(*no_context, |acc, &w| acc + w).as_f64();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(SimError::InvalidPopulation(format!("weights sum to {total}, expected 1")));
                }
                weights
                    .iter()
                    .chain(Some(no_context))
                    .scan(S::zero(), |acc, &w| {
                        *acc = *acc + w;
                        Some(*acc)
                    })
                    .collect()
            }
            Population::Features {
                model,
                audiences,
                partition,
            } => {
                model.validate()?;
                if partition.len() != contexts {
                    return Err(SimError::InvalidPopulation(format!(
                        "partition has {} contexts, theta_star has {contexts}",
                        partition.len()
                    )));
                }
                let named: Vec<&str> = model
                    .features
                    .iter()
                    .map(|f| match f {
                        FeatureDist::Categorical { name, .. } | FeatureDist::Uniform { name, .. } => {
                            name.as_str()
                        }
                    })
                    .collect();
                for clause in audiences.iter().flat_map(|ta| &ta.predicate) {
                    if !named.contains(&clause.feature()) {
                        return Err(AudienceError::MissingFeature(clause.feature().to_owned()).into());
                    }
                }
                Vec::new()
            }
        };
        Ok(Self {
            creatives,
            contexts,
            theta_star: theta,
            costs,
            population,
            cumulative,
        })
    }

    pub fn creatives(&self) -> usize {
        self.creatives
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn theta(&self, r: usize, j: usize) -> S {
        self.theta_star[r * self.contexts + j]
    }

    pub fn cost(&self, r: usize, j: usize) -> &CostSpec<S> {
        &self.costs[r * self.contexts + j]
    }

    pub fn population(&self) -> &Population<S> {
        &self.population
    }

    /// Draws one arrival's context (zero-based index), or `None` when the
    /// user is outside every TA.
    pub fn draw_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<usize>, SimError> {
        match &self.population {
            Population::Contexts { .. } => {
                let i = pick_cumulative(&self.cumulative, S::sample_unit(rng));
                Ok((i < self.contexts).then_some(i))
            }
            Population::Features {
                model,
                audiences,
                partition,
            } => {
                let user = model.sample(rng);
                let da = audience::assign_context(&user, audiences, partition)?;
                Ok(da.and_then(|id| partition.context_index(id)))
            }
        }
    }
}

/// One arrival in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub ordinal: u64,
    /// Zero-based context index; `None` for users outside every TA.
    pub context: Option<usize>,
}

/// `batch_size` independent arrivals.
pub fn sample_batch<S: Scalar, R: Rng + ?Sized>(
    truth: &GroundTruth<S>,
    batch_size: u64,
    rng: &mut R,
) -> Result<Vec<Arrival>, SimError> {
    (0..batch_size)
        .map(|ordinal| {
            Ok(Arrival {
                ordinal,
                context: truth.draw_context(rng)?,
            })
        })
        .collect()
}

/// Click and display cost for showing creative `r` in context `j`.
pub fn realize_outcome<S: Scalar, R: Rng + ?Sized>(
    truth: &GroundTruth<S>,
    j: usize,
    r: usize,
    rng: &mut R,
) -> (bool, S) {
    let clicked = S::sample_unit(rng) < truth.theta(r, j);
    let cost = truth.cost(r, j).draw(rng);
    (clicked, cost)
}

/// One impression/click log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord<S> {
    pub t: u64,
    pub i: u64,
    pub da_id: u32,
    pub creative: usize,
    pub clicked: u8,
    pub cost: S,
}

/// Appends records as newline-delimited JSON.
pub fn write_log<S: Scalar, W: Write>(records: &[LogRecord<S>], mut out: W) -> io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads newline-delimited JSON log records.
pub fn read_log<S: Scalar, R: BufRead>(input: R) -> io::Result<Vec<LogRecord<S>>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.is_empty()))
        .map(|line| serde_json::from_str(&line?).map_err(io::Error::other))
        .collect()
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 {
            last = i;
        }
        if u < acc {
            return i;
        }
    }
    last
}

fn pick_cumulative<S: Scalar>(cumulative: &[S], u: S) -> usize {
    match cumulative.iter().position(|&c| u < c) {
        Some(i) => i,
        // rounding left the total just under 1: take the last bin with mass
        None => {
            let mut prev = S::zero();
            let mut last = 0;
            for (i, &c) in cumulative.iter().enumerate() {
                if c > prev {
                    last = i;
                }
                prev = c;
            }
            last
        }
    }
}

//! Beta-Bernoulli posterior grid over creative x disjoint-audience cells,
//! Thompson allocation, and TA-level best-combination probabilities.

mod grid;
mod interval;
mod payoff;
mod sampling;

use thiserror::Error;

pub use grid::{
    BatchStats, CellRecord, PosteriorGrid, PosteriorHeader, PosteriorSnapshot, MAX_ARMS,
    MAX_CREATIVES,
};
pub use interval::{beta_quantile, credible_interval, DEFAULT_LEVEL};
pub use payoff::PayoffModel;
pub use sampling::{
    aggregate_lambda, allocation_weights, best_combo_probability, choose_creative,
    ta_credible_interval, ta_credible_intervals, BestProbMatrix, PosteriorSampler, DEFAULT_DRAWS,
    MIN_DRAWS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("grid needs at least one creative and one context")]
    EmptyGrid,
    #[error("{cells} arms exceed the cap of {cap}")]
    TooManyArms { cells: usize, cap: usize },
    #[error("shape mismatch: expected {expected:?} (creatives, contexts)")]
    ShapeMismatch { expected: (usize, usize) },
    #[error("Beta parameters must be finite and positive")]
    InvalidParameter,
    #[error("malformed batch: cell ({r}, {j}) has {clicks} clicks > {impressions} impressions")]
    MalformedStats {
        r: usize,
        j: usize,
        clicks: u64,
        impressions: u64,
    },
    #[error("malformed batch: more impressions than arrivals")]
    MoreImpressionsThanArrivals,
    #[error("invalid payoff model: {0}")]
    InvalidPayoff(String),
    #[error("{draws} Monte Carlo draws is below the minimum of {min}")]
    TooFewDraws { draws: usize, min: usize },
    #[error("index {0} out of range")]
    ContextOutOfRange(usize),
    #[error("credible level {0} outside (0, 1)")]
    InvalidLevel(f64),
}

//! Creative x target-audience experiments run as a contextual Thompson
//! sampler over disjoint audiences.
//!
//! Overlapping target audiences are split into disjoint audiences
//! ([`audience`]); a Beta-Bernoulli Thompson sampler learns per creative and
//! disjoint audience ([`bandit`]); posterior draws are aggregated back to the
//! target-audience level to estimate the probability that each creative x
//! audience combination is best. [`sim`] supplies seeded synthetic traffic
//! and [`engine`] drives the batch loop, lifecycle, reports and snapshots.
//!
//! The statistical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the engine uses.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audience;
pub mod bandit;
pub mod engine;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;

pub type ContextProbabilities = audience::ContextProbabilities<f64>;
pub type PosteriorGrid = bandit::PosteriorGrid<f64>;
pub type PayoffModel = bandit::PayoffModel<f64>;
pub type BestProbMatrix = bandit::BestProbMatrix<f64>;
pub type PosteriorSampler = bandit::PosteriorSampler<f64>;
pub type GroundTruth = sim::GroundTruth<f64>;
pub type LogRecord = sim::LogRecord<f64>;

pub type ContextProbabilitiesF32 = audience::ContextProbabilities<f32>;
pub type PosteriorGridF32 = bandit::PosteriorGrid<f32>;
pub type PayoffModelF32 = bandit::PayoffModel<f32>;
pub type BestProbMatrixF32 = bandit::BestProbMatrix<f32>;

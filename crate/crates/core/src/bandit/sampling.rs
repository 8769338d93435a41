//! Thompson allocation and Monte Carlo best-combination probabilities.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{BanditError, PayoffModel, PosteriorGrid};
use crate::audience::ContextProbabilities;
use crate::scalar::{argmax, Scalar};

/// Smallest Monte Carlo draw count accepted for probability estimates.
pub const MIN_DRAWS: usize = 1000;

/// Default Monte Carlo draw count.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Beta samplers frozen from one posterior snapshot.
///
/// Serving a batch reuses one sampler so every arrival in the batch sees the
/// same posterior.
#[derive(Debug, Clone)]
pub struct PosteriorSampler<S: Scalar> {
    creatives: usize,
    contexts: usize,
    cells: Vec<S::Beta>,
}

impl<S: Scalar> PosteriorSampler<S> {
    pub fn from_grid(grid: &PosteriorGrid<S>) -> Self {
        let cells = grid
            .cells()
            .map(|c| S::beta_distribution(c.alpha, c.beta).expect("grid parameters are positive"))
            .collect();
        Self {
            creatives: grid.creatives(),
            contexts: grid.contexts(),
            cells,
        }
    }

    pub fn creatives(&self) -> usize {
        self.creatives
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    /// One draw per creative in context `j`, creative order.
    pub fn draw_context<R: Rng + ?Sized>(&self, j: usize, rng: &mut R, out: &mut [S]) {
        for (r, slot) in out.iter_mut().enumerate().take(self.creatives) {
            *slot = self.cells[r * self.contexts + j].sample(rng);
        }
    }

    /// One draw per cell, cell-major (`r * J + j`).
    pub fn draw_all<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [S]) {
        for (slot, dist) in out.iter_mut().zip(&self.cells) {
            *slot = dist.sample(rng);
        }
    }

    /// One-draw Thompson sampling: sample every creative's CTR in context
    /// `j` and return the creative with the highest sampled payoff.
    pub fn choose_creative<R: Rng + ?Sized>(
        &self,
        payoff: &PayoffModel<S>,
        j: usize,
        rng: &mut R,
    ) -> usize {
        let mut best = 0;
        let mut best_value = S::neg_infinity();
        for r in 0..self.creatives {
            let theta = self.cells[r * self.contexts + j].sample(rng);
            let value = payoff.expected_payoff(theta, r, j);
            if value > best_value {
                best = r;
                best_value = value;
            }
        }
        best
    }
}

/// Single Thompson draw against `grid` for an arrival in context `j`.
pub fn choose_creative<S: Scalar, R: Rng + ?Sized>(
    grid: &PosteriorGrid<S>,
    payoff: &PayoffModel<S>,
    j: usize,
    rng: &mut R,
) -> usize {
    PosteriorSampler::from_grid(grid).choose_creative(payoff, j, rng)
}

/// Monte Carlo estimate of the Thompson allocation probabilities in context
/// `j`: the share of `draws` joint samples each creative wins.
pub fn allocation_weights<S: Scalar, R: Rng + ?Sized>(
    grid: &PosteriorGrid<S>,
    payoff: &PayoffModel<S>,
    j: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<S>, BanditError> {
    check_draws(draws)?;
    payoff.check_shape(grid.creatives(), grid.contexts())?;
    if j >= grid.contexts() {
        return Err(BanditError::ContextOutOfRange(j));
    }
    let sampler = PosteriorSampler::from_grid(grid);
    let creatives = grid.creatives();
    let mut theta = vec![S::zero(); creatives];
    let mut wins = vec![0u64; creatives];
    for _ in 0..draws {
        sampler.draw_context(j, rng, &mut theta);
        let values = theta
            .iter()
            .enumerate()
            .map(|(r, &th)| payoff.expected_payoff(th, r, j));
        wins[argmax(values).expect("at least one creative")] += 1;
    }
    Ok(shares(&wins, draws))
}

/// TA-level CTRs `lambda[r][k] = sum_{j in O(k)} theta[r][j] * p_hat(j|k)`,
/// returned `r * K + k`.
pub fn aggregate_lambda<S: Scalar>(
    theta: &[S],
    creatives: usize,
    probs: &ContextProbabilities<S>,
) -> Vec<S> {
    let contexts = probs.context_count();
    let audiences = probs.audience_count();
    debug_assert_eq!(theta.len(), creatives * contexts);
    let mut lambda = Vec::with_capacity(creatives * audiences);
    for r in 0..creatives {
        let row = &theta[r * contexts..(r + 1) * contexts];
        for k in 0..audiences {
            lambda.push(probs.aggregate(row, k));
        }
    }
    lambda
}

/// Posterior probability that each creative x audience combination has the
/// highest TA-level expected payoff, plus the marginals shown in reports.
///
/// Matrices are stored `r * K + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestProbMatrix<S> {
    pub creatives: usize,
    pub audiences: usize,
    pub draws: usize,
    /// Draws won by each combination; sums to `draws`.
    pub wins: Vec<u64>,
    pub phi: Vec<S>,
    /// TA-level CTR from aggregated posterior means.
    pub lambda_mean: Vec<S>,
    /// Share of draws in which creative `r` holds the best combination.
    pub creative_best: Vec<S>,
    /// Share of draws in which audience `k` holds the best combination.
    pub audience_best: Vec<S>,
    /// Per audience, share of draws in which creative `r` is best inside it.
    pub creative_best_by_audience: Vec<S>,
}

impl<S: Scalar> BestProbMatrix<S> {
    pub fn phi(&self, r: usize, k: usize) -> S {
        self.phi[r * self.audiences + k]
    }

    /// Leading combination `(r, k, phi)`; ties go to the smallest `(r, k)`.
    pub fn best(&self) -> (usize, usize, S) {
        let idx = argmax(self.phi.iter().copied()).expect("nonempty matrix");
        (idx / self.audiences, idx % self.audiences, self.phi[idx])
    }

    pub fn max_phi(&self) -> S {
        self.best().2
    }

    /// `phi` as nested rows, `[r][k]`.
    pub fn phi_rows(&self) -> Vec<Vec<S>> {
        self.phi.chunks(self.audiences).map(<[S]>::to_vec).collect()
    }
}

/// Monte Carlo estimate of the best-combination probabilities.
///
/// Each draw samples every posterior cell, aggregates to TA level, subtracts
/// the TA-level cost and credits the argmax combination.
pub fn best_combo_probability<S: Scalar, R: Rng + ?Sized>(
    grid: &PosteriorGrid<S>,
    payoff: &PayoffModel<S>,
    probs: &ContextProbabilities<S>,
    draws: usize,
    rng: &mut R,
) -> Result<BestProbMatrix<S>, BanditError> {
    check_draws(draws)?;
    check_shapes(grid, payoff, probs)?;
    let creatives = grid.creatives();
    let audiences = probs.audience_count();
    let gamma = payoff.gamma();
    let costs = payoff.audience_costs(probs);
    let sampler = PosteriorSampler::from_grid(grid);

    let mut theta = vec![S::zero(); creatives * grid.contexts()];
    let mut omega = vec![S::zero(); creatives * audiences];
    let mut wins = vec![0u64; creatives * audiences];
    let mut creative_wins = vec![0u64; creatives];
    let mut audience_wins = vec![0u64; audiences];
    let mut within_wins = vec![0u64; creatives * audiences];

    for _ in 0..draws {
        sampler.draw_all(rng, &mut theta);
        for r in 0..creatives {
            let row = &theta[r * grid.contexts()..(r + 1) * grid.contexts()];
            for k in 0..audiences {
                omega[r * audiences + k] = gamma * probs.aggregate(row, k) - costs[r * audiences + k];
            }
        }
        let winner = argmax(omega.iter().copied()).expect("nonempty");
        wins[winner] += 1;

        let by_creative = (0..creatives).map(|r| row_max(&omega[r * audiences..(r + 1) * audiences]));
        creative_wins[argmax(by_creative).expect("nonempty")] += 1;
        let by_audience = (0..audiences).map(|k| column_max(&omega, audiences, k));
        audience_wins[argmax(by_audience).expect("nonempty")] += 1;
        for k in 0..audiences {
            let r = argmax((0..creatives).map(|r| omega[r * audiences + k])).expect("nonempty");
            within_wins[r * audiences + k] += 1;
        }
    }

    Ok(BestProbMatrix {
        creatives,
        audiences,
        draws,
        phi: shares(&wins, draws),
        wins,
        lambda_mean: aggregate_lambda(&grid.means(), creatives, probs),
        creative_best: shares(&creative_wins, draws),
        audience_best: shares(&audience_wins, draws),
        creative_best_by_audience: shares(&within_wins, draws),
    })
}

/// Equal-tailed TA-level credible intervals for every combination, taken as
/// empirical quantiles of `draws` Monte Carlo samples of `lambda`.
/// Returned `r * K + k`.
pub fn ta_credible_intervals<S: Scalar, R: Rng + ?Sized>(
    grid: &PosteriorGrid<S>,
    probs: &ContextProbabilities<S>,
    level: S,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<(S, S)>, BanditError> {
    check_draws(draws)?;
    super::interval::check_level(level)?;
    if grid.contexts() != probs.context_count() {
        return Err(BanditError::ShapeMismatch {
            expected: (grid.creatives(), probs.context_count()),
        });
    }
    let creatives = grid.creatives();
    let audiences = probs.audience_count();
    let sampler = PosteriorSampler::from_grid(grid);
    let mut theta = vec![S::zero(); creatives * grid.contexts()];
    let mut samples = vec![Vec::with_capacity(draws); creatives * audiences];
    for _ in 0..draws {
        sampler.draw_all(rng, &mut theta);
        for (slot, lambda) in samples.iter_mut().zip(aggregate_lambda(&theta, creatives, probs)) {
            slot.push(lambda);
        }
    }
    let tail = (S::one() - level) / S::lit(2.0);
    Ok(samples
        .into_iter()
        .map(|mut xs| {
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            (
                super::interval::empirical_quantile(&xs, tail),
                super::interval::empirical_quantile(&xs, S::one() - tail),
            )
        })
        .collect())
}

/// Credible interval for a single combination `(r, k)`.
pub fn ta_credible_interval<S: Scalar, R: Rng + ?Sized>(
    grid: &PosteriorGrid<S>,
    probs: &ContextProbabilities<S>,
    r: usize,
    k: usize,
    level: S,
    draws: usize,
    rng: &mut R,
) -> Result<(S, S), BanditError> {
    if r >= grid.creatives() || k >= probs.audience_count() {
        return Err(BanditError::ContextOutOfRange(k));
    }
    let all = ta_credible_intervals(grid, probs, level, draws, rng)?;
    Ok(all[r * probs.audience_count() + k])
}

fn row_max<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().fold(S::neg_infinity(), S::max)
}

fn column_max<S: Scalar>(m: &[S], width: usize, k: usize) -> S {
    m.iter().skip(k).step_by(width).copied().fold(S::neg_infinity(), S::max)
}

fn shares<S: Scalar>(wins: &[u64], draws: usize) -> Vec<S> {
    let h = S::count(draws as u64);
    wins.iter().map(|&w| S::count(w) / h).collect()
}

fn check_draws(draws: usize) -> Result<(), BanditError> {
    if draws < MIN_DRAWS {
        return Err(BanditError::TooFewDraws { draws, min: MIN_DRAWS });
    }
    Ok(())
}

fn check_shapes<S: Scalar>(
    grid: &PosteriorGrid<S>,
    payoff: &PayoffModel<S>,
    probs: &ContextProbabilities<S>,
) -> Result<(), BanditError> {
    payoff.check_shape(grid.creatives(), grid.contexts())?;
    if probs.context_count() != grid.contexts() {
        return Err(BanditError::ShapeMismatch {
            expected: (grid.creatives(), probs.context_count()),
        });
    }
    Ok(())
}

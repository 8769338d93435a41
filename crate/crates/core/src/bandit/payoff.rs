use serde::{Deserialize, Serialize};

use super::BanditError;
use crate::audience::ContextProbabilities;
use crate::scalar::Scalar;

/// Click value and mean display costs.
///
/// Expected payoff of showing creative `r` in context `j` is
/// `gamma * theta[r][j] - cost[r][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffModel<S> {
    gamma: S,
    creatives: usize,
    contexts: usize,
    context_costs: Vec<S>,
}

impl<S: Scalar> PayoffModel<S> {
    /// Pure CTR payoff: `gamma = 1`, zero costs.
    pub fn ctr_only(creatives: usize, contexts: usize) -> Self {
        Self {
            gamma: S::one(),
            creatives,
            contexts,
            context_costs: vec![S::zero(); creatives * contexts],
        }
    }

    /// `costs` is `R x J`, `costs[r][j]`.
    pub fn new(gamma: S, costs: &[Vec<S>]) -> Result<Self, BanditError> {
        if !(gamma > S::zero() && gamma.is_finite()) {
            return Err(BanditError::InvalidPayoff("gamma must be positive".into()));
        }
        let creatives = costs.len();
        let contexts = costs.first().map_or(0, Vec::len);
        if creatives == 0 || contexts == 0 || costs.iter().any(|row| row.len() != contexts) {
            return Err(BanditError::InvalidPayoff("cost table must be a nonempty R x J matrix".into()));
        }
        let context_costs: Vec<S> = costs.iter().flatten().copied().collect();
        if context_costs.iter().any(|&b| !(b >= S::zero() && b.is_finite())) {
            return Err(BanditError::InvalidPayoff("costs must be finite and nonnegative".into()));
        }
        Ok(Self {
            gamma,
            creatives,
            contexts,
            context_costs,
        })
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn creatives(&self) -> usize {
        self.creatives
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    #[inline]
    pub fn context_cost(&self, r: usize, j: usize) -> S {
        self.context_costs[r * self.contexts + j]
    }

    /// `gamma * theta - cost` for one cell.
    #[inline]
    pub fn expected_payoff(&self, theta: S, r: usize, j: usize) -> S {
        self.gamma * theta - self.context_cost(r, j)
    }

    /// TA-level mean costs `b_bar[r][k]`, aggregated with `p_hat(j|k)`.
    pub fn audience_costs(&self, probs: &ContextProbabilities<S>) -> Vec<S> {
        let audiences = probs.audience_count();
        let mut out = Vec::with_capacity(self.creatives * audiences);
        for r in 0..self.creatives {
            let row = &self.context_costs[r * self.contexts..(r + 1) * self.contexts];
            for k in 0..audiences {
                out.push(probs.aggregate(row, k));
            }
        }
        out
    }

    /// Same model with every cost shifted by `c`.
    pub fn shifted(&self, c: S) -> Self {
        Self {
            context_costs: self.context_costs.iter().map(|&b| b + c).collect(),
            ..self.clone()
        }
    }

    /// Same model with `gamma` and every cost multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        Self {
            gamma: self.gamma * factor,
            context_costs: self.context_costs.iter().map(|&b| b * factor).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn check_shape(&self, creatives: usize, contexts: usize) -> Result<(), BanditError> {
        if self.creatives != creatives || self.contexts != contexts {
            return Err(BanditError::ShapeMismatch {
                expected: (creatives, contexts),
            });
        }
        Ok(())
    }
}

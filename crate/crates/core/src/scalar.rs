//! Scalar abstraction shared by the posterior, sampling and metric code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::Distribution;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the bandit math runs over (`f32` or `f64`).
///
/// Counting quantities (impressions, clicks) stay integral; everything that
/// is a probability, a Beta parameter, a cost or a payoff is an `S: Scalar`.
pub trait Scalar:
    Float
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Beta sampler for this precision.
    type Beta: Distribution<Self> + Clone + Debug + Send + Sync;

    /// Returns `None` unless both shape parameters are finite and positive.
    fn beta_distribution(alpha: Self, beta: Self) -> Option<Self::Beta>;

    /// Uniform draw on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Integer counts (impressions, clicks) as a scalar.
    #[inline]
    fn count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    type Beta = rand_distr::Beta<f64>;

    fn beta_distribution(alpha: f64, beta: f64) -> Option<Self::Beta> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            rand_distr::Beta::new(alpha, beta).ok()
        } else {
            None
        }
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.random::<f64>()
    }
}

impl Scalar for f32 {
    type Beta = rand_distr::Beta<f32>;

    fn beta_distribution(alpha: f32, beta: f32) -> Option<Self::Beta> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            rand_distr::Beta::new(alpha, beta).ok()
        } else {
            None
        }
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> f32 {
        rng.random::<f32>()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<S: Scalar>(values: impl IntoIterator<Item = S>) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax([1.0f64, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax([0.5f32]), Some(0));
        assert_eq!(argmax(Vec::<f64>::new()), None);
    }

    #[test]
    fn beta_rejects_bad_shapes() {
        assert!(f64::beta_distribution(0.0, 1.0).is_none());
        assert!(f64::beta_distribution(1.0, f64::NAN).is_none());
        assert!(f32::beta_distribution(2.0, 3.0).is_some());
    }
}

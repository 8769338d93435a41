//! Business-value metrics for a finished test.

use num_traits::Num;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("report is degenerate: {0}")]
    DegenerateReport(String),
    #[error("adaptive allocation needs more than one creative")]
    SingleCreative,
}

/// Best combination CTR over the mean CTR of all tested combinations: the
/// lift over picking one combination uniformly at random without a test.
///
/// Generic over any ordered field, so exact rationals work as well as floats.
pub fn value_of_experimentation<T>(ctrs: &[T]) -> Result<T, MetricError>
where
    T: Num + Clone + PartialOrd,
{
    let first = ctrs
        .first()
        .ok_or_else(|| MetricError::DegenerateReport("no combinations".into()))?;
    let mut best = first.clone();
    let mut sum = T::zero();
    let mut n = T::zero();
    for ctr in ctrs {
        if *ctr > best {
            best = ctr.clone();
        }
        sum = sum + ctr.clone();
        n = n + T::one();
    }
    if sum == T::zero() {
        return Err(MetricError::DegenerateReport("all CTRs are zero".into()));
    }
    Ok(best * n / sum)
}

/// Expected clicks had every DA's impressions been split equally across
/// creatives: `sum_j (n_j / R) * sum_r theta_hat[r][j]`.
///
/// `theta_hat` is cell-major (`r * J + j`).
pub fn counterfactual_clicks<S: Scalar>(
    context_impressions: &[u64],
    theta_hat: &[S],
    creatives: usize,
) -> Result<S, MetricError> {
    if creatives <= 1 {
        return Err(MetricError::SingleCreative);
    }
    let contexts = context_impressions.len();
    if theta_hat.len() != creatives * contexts {
        return Err(MetricError::DegenerateReport("theta_hat shape mismatch".into()));
    }
    let r = S::count(creatives as u64);
    let mut total = S::zero();
    for (j, &n) in context_impressions.iter().enumerate() {
        let ctr_sum = (0..creatives).fold(S::zero(), |acc, r| acc + theta_hat[r * contexts + j]);
        total = total + S::count(n) / r * ctr_sum;
    }
    Ok(total)
}

/// Observed clicks over equal-allocation counterfactual clicks.
pub fn value_of_adaptive_design<S: Scalar>(
    context_impressions: &[u64],
    theta_hat: &[S],
    creatives: usize,
    observed_clicks: u64,
) -> Result<S, MetricError> {
    let counterfactual = counterfactual_clicks(context_impressions, theta_hat, creatives)?;
    if counterfactual <= S::zero() {
        return Err(MetricError::DegenerateReport("counterfactual clicks are zero".into()));
    }
    Ok(S::count(observed_clicks) / counterfactual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn experimentation_two_combos_exact() {
        let ctrs = [Ratio::new(4i64, 100), Ratio::new(2, 100)];
        assert_eq!(value_of_experimentation(&ctrs).unwrap(), Ratio::new(4, 3));
        let v = value_of_experimentation(&[0.04f64, 0.02]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn experimentation_equal_ctrs_is_one() {
        assert_eq!(value_of_experimentation(&[0.03f64; 6]).unwrap(), 1.0);
    }

    #[test]
    fn experimentation_degenerate() {
        assert!(value_of_experimentation::<f64>(&[]).is_err());
        assert!(value_of_experimentation(&[0.0f64, 0.0]).is_err());
    }

    #[test]
    fn adaptive_hand_built() {
        // one DA with 300 impressions, three creatives
        let v = value_of_adaptive_design(&[300], &[0.10f64, 0.01, 0.01], 3, 25).unwrap();
        assert!((counterfactual_clicks(&[300], &[0.10f64, 0.01, 0.01], 3).unwrap() - 12.0).abs() < 1e-12);
        assert!((v - 25.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_needs_two_creatives() {
        assert_eq!(
            value_of_adaptive_design(&[10], &[0.1f64], 1, 1).unwrap_err(),
            MetricError::SingleCreative
        );
    }
}

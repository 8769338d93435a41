use statrs::function::beta::beta_reg;

use super::BanditError;
use crate::scalar::Scalar;

/// Default credible level for reports.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Equal-tailed Beta credible interval at `level`.
pub fn credible_interval<S: Scalar>(alpha: S, beta: S, level: S) -> Result<(S, S), BanditError> {
    check_level(level)?;
    if !(alpha > S::zero() && beta > S::zero() && alpha.is_finite() && beta.is_finite()) {
        return Err(BanditError::InvalidParameter);
    }
    let (a, b) = (alpha.as_f64(), beta.as_f64());
    let tail = (1.0 - level.as_f64()) / 2.0;
    Ok((
        S::lit(beta_quantile(a, b, tail)),
        S::lit(beta_quantile(a, b, 1.0 - tail)),
    ))
}

/// Inverse of the regularized incomplete beta function by bisection.
pub fn beta_quantile(alpha: f64, beta: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // 0.5^64 is below f64 resolution on [0, 1]
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(alpha, beta, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn empirical_quantile<S: Scalar>(sorted: &[S], q: S) -> S {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * S::count(n as u64 - 1);
    let lo = pos.floor();
    let i = lo.to_usize().expect("nonnegative position").min(n - 1);
    let frac = pos - lo;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    }
}

pub(crate) fn check_level<S: Scalar>(level: S) -> Result<(), BanditError> {
    if !(level > S::zero() && level < S::one()) {
        return Err(BanditError::InvalidLevel(level.as_f64()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_quantiles() {
        let (lo, hi) = credible_interval(1.0f64, 1.0, 0.95).unwrap();
        assert!((lo - 0.025).abs() < 1e-9, "{lo}");
        assert!((hi - 0.975).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn closed_form_quantile_beta_2_1() {
        // CDF of Beta(2,1) is x^2
        for p in [0.1, 0.5, 0.9] {
            assert!((beta_quantile(2.0, 1.0, p) - f64::sqrt(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_level() {
        assert!(credible_interval(1.0f64, 1.0, 1.0).is_err());
        assert!(credible_interval(1.0f64, 1.0, 0.0).is_err());
        assert!(credible_interval(0.0f64, 1.0, 0.5).is_err());
    }

    #[test]
    fn empirical_quantile_interpolates() {
        let xs = [0.0f64, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&xs, 0.5), 2.0);
        assert_eq!(empirical_quantile(&xs, 0.125), 0.5);
        assert_eq!(empirical_quantile(&xs, 1.0), 4.0);
    }
}

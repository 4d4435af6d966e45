use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::beta::beta_reg;

use super::AnalysisError;

const BISECTION_TOL: f64 = 1e-12;

/// Exact (Clopper-Pearson) two-sided interval for `k` successes in `n`
/// trials. Bounds are Beta quantiles found by bisection on the regularized
/// incomplete Beta function; lower = 0 when k = 0 and upper = 1 when k = n.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Result<(f64, f64), AnalysisError> {
    if n == 0 || k > n || !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::InvalidInterval { k, n, alpha });
    }
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        // I_p(k, n-k+1) = P(X >= k | p), increasing in p
        bisect(|p| beta_reg(kf, nf - kf + 1.0, p), alpha / 2.0)
    };
    let upper = if k == n {
        1.0
    } else {
        bisect(|p| beta_reg(kf + 1.0, nf - kf, p), 1.0 - alpha / 2.0)
    };
    Ok((lower, upper))
}

/// Root of `f(p) = target` on [0, 1] for increasing `f`.
fn bisect(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central acceptance band of the proportion of successes under
/// Binomial(n, p): the alpha/2 and 1 - alpha/2 quantiles divided by n.
pub fn chance_band(n: u64, p: f64, alpha: f64) -> Result<(f64, f64), AnalysisError> {
    if n == 0 || !(alpha > 0.0 && alpha < 1.0) || !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::InvalidInterval { k: 0, n, alpha });
    }
    let dist = Binomial::new(p, n).map_err(|_| AnalysisError::InvalidInterval { k: 0, n, alpha })?;
    let lo = dist.inverse_cdf(alpha / 2.0);
    let hi = dist.inverse_cdf(1.0 - alpha / 2.0);
    Ok((lo as f64 / n as f64, hi as f64 / n as f64))
}

/// `k = round(accuracy * n)`: accuracies are ratios of integer counts.
pub fn count_from_accuracy(accuracy: f64, n: u64) -> u64 {
    (accuracy * n as f64).round().clamp(0.0, n as f64) as u64
}

/// Upper bound of the exact interval around chance for `n` trials of a
/// three-way choice (k = round(n / 3)).
pub fn chance_upper(n: u64) -> f64 {
    let k = count_from_accuracy(1.0 / 3.0, n);
    clopper_pearson(k, n, 0.05).expect("valid chance interval").1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // scipy.stats.beta.ppf reference values
        let (lo, hi) = clopper_pearson(17, 51, 0.05).unwrap();
        assert!((lo - 0.207_583_3).abs() < 1e-6, "{lo}");
        assert!((hi - 0.479_212_6).abs() < 1e-6, "{hi}");
        let (lo, hi) = clopper_pearson(12, 36, 0.05).unwrap();
        assert!((lo - 0.185_561_8).abs() < 1e-6, "{lo}");
        assert!((hi - 0.509_702_5).abs() < 1e-6, "{hi}");
    }

    #[test]
    fn boundary_conventions() {
        assert_eq!(clopper_pearson(0, 10, 0.05).unwrap().0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.05).unwrap().1, 1.0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(clopper_pearson(3, 2, 0.05).is_err());
        assert!(clopper_pearson(0, 0, 0.05).is_err());
        assert!(clopper_pearson(1, 2, 0.0).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
    }

    #[test]
    fn chance_band_for_a_test_set() {
        let (lo, hi) = chance_band(51, 1.0 / 3.0, 0.05).unwrap();
        assert_eq!(hi, 24.0 / 51.0);
        assert_eq!(lo, 11.0 / 51.0);
    }
}

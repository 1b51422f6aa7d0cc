//! Small statistics helpers for the bound checks.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::simulate::Moments;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

pub fn mean_se(xs: &[f64]) -> Estimate {
    let mut m = Moments::default();
    for &x in xs {
        m.push(x);
    }
    let se = if m.n > 1 {
        (m.variance() / m.n as f64).sqrt()
    } else {
        0.0
    };
    Estimate {
        mean: m.mean,
        std_error: se,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfEstimate {
    pub value: f64,
    pub std_error: f64,
    /// A single sample carries more than 5% of the total: the standard error
    /// is not trustworthy.
    pub heavy_tailed: bool,
}

/// `mean(exp(λ y_i))` with its standard error.
pub fn empirical_mgf(ys: &[f64], lambda: f64) -> MgfEstimate {
    let terms: Vec<f64> = ys.iter().map(|y| (lambda * y).exp()).collect();
    let est = mean_se(&terms);
    let sum: f64 = terms.iter().sum();
    let max = terms.iter().copied().fold(0.0, f64::max);
    MgfEstimate {
        value: est.mean,
        std_error: est.std_error,
        heavy_tailed: !sum.is_finite() || (terms.len() >= 100 && max > 0.05 * sum),
    }
}

/// One-sided Clopper–Pearson upper confidence bound for a binomial
/// proportion with `k` successes out of `n`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> f64 {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    if k == n {
        return 1.0;
    }
    Beta::new(k as f64 + 1.0, (n - k) as f64)
        .expect("valid beta shape")
        .inverse_cdf(confidence)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[7.0]).std_error, 0.0);
    }

    #[test]
    fn mgf_at_zero_is_one() {
        let m = empirical_mgf(&[0.3, -1.0, 2.0], 0.0);
        assert_eq!(m.value, 1.0);
        assert_eq!(m.std_error, 0.0);
    }

    #[test]
    fn clopper_pearson_values() {
        // Zero successes: 1 - (1 - c)^{1/n}.
        let u = clopper_pearson_upper(0, 100, 0.99);
        assert!((u - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-10);
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
        let a = clopper_pearson_upper(10, 1000, 0.99);
        let b = clopper_pearson_upper(20, 1000, 0.99);
        assert!(0.01 < a && a < b);
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0];
        assert!((ols_slope(&x, &y) + 2.0).abs() < 1e-15);
    }
}

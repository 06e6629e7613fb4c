//! Goodness-of-fit statistics used to validate the samplers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestOutcome {
    /// True when the null hypothesis survives at `significance`.
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// One-sample Kolmogorov–Smirnov test of `samples` against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestOutcome> {
    if samples.is_empty() {
        return Err(Error::Contract("KS test on zero samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    let p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestOutcome { statistic: d, p_value })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square goodness of fit of observed counts to probabilities.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::Contract(format!(
            "chi-square needs matching category counts >= 2 ({} vs {})",
            observed.len(),
            probs.len()
        )));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n * p;
        if e <= 0.0 {
            return Err(Error::Domain("chi-square expected count must be positive".into()));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TestOutcome { statistic: stat, p_value: 1.0 - dist.cdf(stat) })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

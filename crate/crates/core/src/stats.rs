//! Small statistics helpers shared by the estimators and the property suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::sde::ReturnEstimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub(crate) fn into_estimate(self, rollouts: usize) -> ReturnEstimate {
        ReturnEstimate {
            mean: self.mean,
            stderr: self.stderr,
            rollouts,
        }
    }
}

/// Sample mean and unbiased variance. The variance of fewer than two points is 0.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1) as f64)
}

pub fn mean_stderr(xs: &[f64]) -> MeanStderr {
    let (mean, var) = mean_var(xs);
    MeanStderr {
        mean,
        stderr: (var / xs.len().max(1) as f64).sqrt(),
    }
}

/// Linear-interpolated empirical quantile, `p` in `[0, 1]`.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, var) = mean_var(xs);
        Self {
            n: xs.len(),
            mean,
            sd: var.sqrt(),
            min: quantile(xs, 0.0),
            q25: quantile(xs, 0.25),
            median: quantile(xs, 0.5),
            q75: quantile(xs, 0.75),
            max: quantile(xs, 1.0),
        }
    }
}

/// One-sided Welch test of `mean(a) > mean(b)`; returns `(t, p)`.
pub fn welch_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let p = if ma > mb { 0.0 } else { 1.0 };
        return (if ma > mb { f64::INFINITY } else { 0.0 }, p);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
    (t, 1.0 - dist.cdf(t))
}

/// One-sided Clopper–Pearson lower confidence bound on a binomial proportion.
pub fn clopper_pearson_lower(successes: usize, trials: usize, confidence: f64) -> f64 {
    if successes == 0 || trials == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    let beta = Beta::new(successes as f64, (trials - successes + 1) as f64)
        .expect("valid beta parameters");
    beta.inverse_cdf(alpha)
}

/// `P(X <= k)` for `X ~ Bin(trials, p)`.
pub fn binomial_cdf(k: usize, trials: usize, p: f64) -> f64 {
    Binomial::new(p, trials as u64).expect("valid binomial parameters").cdf(k as u64)
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

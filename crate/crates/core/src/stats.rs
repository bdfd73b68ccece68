//! Small sample-statistics helpers shared by the checks.

use serde::{Deserialize, Serialize};

/// z-quantile of the two-sided 99% normal interval.
pub const Z99: f64 = 2.576;

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    /// Two-pass mean and standard error of the mean. Summation runs in slice
    /// order so the result only depends on the sample order; sums are shifted
    /// by the first sample, which makes constant samples exact.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, count: 0 };
        }
        let shift = samples[0];
        let mean = shift + samples.iter().map(|v| v - shift).sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n as f64 - 1.0) / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, count: n }
    }

    pub fn sample_variance(samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    }
}

/// Proportion estimate with its binomial standard error.
pub fn proportion(successes: usize, trials: usize) -> Estimate {
    let p = successes as f64 / trials as f64;
    Estimate { mean: p, stderr: (p * (1.0 - p) / trials as f64).sqrt(), count: trials }
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let slope_stderr = (rss / (nf - 2.0) / sxx).sqrt();
    Some(LinearFit { slope, intercept, slope_stderr, points: n })
}

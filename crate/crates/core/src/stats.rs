//! Small statistical helpers shared by the Monte Carlo front ends.

use serde::{Deserialize, Serialize};

/// Binomial proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// z-score the interval was computed at.
    pub z: f64,
}

impl Proportion {
    /// Wilson score interval at the given z (1.96 for 95%).
    pub fn wilson(successes: u64, trials: u64, z: f64) -> Self {
        assert!(trials > 0, "wilson interval needs at least one trial");
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            successes,
            trials,
            estimate: p,
            ci_low: (center - half).max(0.0),
            ci_high: (center + half).min(1.0),
            z,
        }
    }

    /// Plain binomial standard error of the estimate.
    pub fn standard_error(&self) -> f64 {
        let n = self.trials as f64;
        (self.estimate * (1.0 - self.estimate) / n).sqrt()
    }

    /// Half-width of the stored interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// Apply a monotone nondecreasing transform to the estimate and both
    /// interval endpoints.
    pub fn map_monotone(&self, f: impl Fn(f64) -> f64) -> (f64, f64, f64) {
        (f(self.estimate), f(self.ci_low), f(self.ci_high))
    }
}

/// Largest upward step between consecutive values measured in units of the
/// combined standard errors. Negative when the sequence never increases.
/// Returns `None` for sequences with fewer than two entries.
pub fn max_upward_step_in_se(values: &[f64], ses: &[f64]) -> Option<f64> {
    assert_eq!(values.len(), ses.len());
    if values.len() < 2 {
        return None;
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 1..values.len() {
        let combined = (ses[i - 1] * ses[i - 1] + ses[i] * ses[i]).sqrt().max(1e-300);
        worst = worst.max((values[i] - values[i - 1]) / combined);
    }
    Some(worst)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    assert!(n >= 2.0);
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

//! Batch-means point estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fewer batches than this make the standard error meaningless.
pub const MIN_BATCHES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {batches} usable batches, need at least {MIN_BATCHES}")]
    InsufficientData { batches: usize },
}

/// A point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_batches: usize,
    pub ci95: (f64, f64),
}

impl Estimate {
    pub fn new(value: f64, std_error: f64, n_batches: usize) -> Self {
        Self {
            value,
            std_error,
            n_batches,
            ci95: (value - 1.96 * std_error, value + 1.96 * std_error),
        }
    }

    /// A value known without error.
    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0)
    }

    /// Mean of the per-batch values, SE = sample sd / √B. Non-finite batch
    /// values (empty batches of a ratio estimator) are skipped.
    pub fn from_batches(values: &[f64]) -> Result<Self, StatsError> {
        let usable: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let b = usable.len();
        if b < MIN_BATCHES {
            return Err(StatsError::InsufficientData { batches: b });
        }
        let mean = usable.iter().sum::<f64>() / b as f64;
        let var = usable.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1) as f64;
        Ok(Self::new(mean, (var / b as f64).sqrt(), b))
    }

    /// Inverse-variance weighted combination of independent estimates.
    /// Falls back to the plain mean when any input has zero error.
    pub fn combine(parts: &[Estimate]) -> Option<Self> {
        if parts.is_empty() {
            return None;
        }
        let batches = parts.iter().map(|e| e.n_batches).sum();
        if parts.iter().any(|e| !(e.std_error > 0.0)) {
            let mean = parts.iter().map(|e| e.value).sum::<f64>() / parts.len() as f64;
            return Some(Self::new(mean, 0.0, batches));
        }
        let (mut wsum, mut vsum) = (0.0, 0.0);
        for e in parts {
            let w = 1.0 / (e.std_error * e.std_error);
            wsum += w;
            vsum += w * e.value;
        }
        Some(Self::new(vsum / wsum, (1.0 / wsum).sqrt(), batches))
    }

    /// (value − target)/SE; zero when both the gap and the SE vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = self.value - target;
        if self.std_error > 0.0 {
            gap / self.std_error
        } else if gap.abs() <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.value * c, self.std_error * c.abs(), self.n_batches)
    }
}

/// Batch values of `f` applied pairwise.
pub fn zip_batches(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Ordinary least-squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

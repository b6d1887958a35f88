// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::ingest::AccelSample;
use serde::{Deserialize, Serialize};

/// Orientation-free magnitude `sqrt((x² + y² + z²) / 3)`.
pub fn magnitude(x: f64, y: f64, z: f64) -> f64 {
    ((x * x + y * y + z * z) / 3.0).sqrt()
}

pub fn accel_magnitude(sample: &AccelSample) -> f64 {
    magnitude(sample.x, sample.y, sample.z)
}

/// Mean, min, max, std, median and variance of the 1-minute window means of
/// one pre-prompt epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub median: f64,
    pub variance: f64,
    /// No samples fell inside the epoch; every statistic is zero.
    pub missing: bool,
}

impl AccelStats {
    pub const MISSING: AccelStats = AccelStats {
        mean: 0.0,
        min: 0.0,
        max: 0.0,
        std: 0.0,
        median: 0.0,
        variance: 0.0,
        missing: true,
    };

    pub fn values(&self) -> [f64; 6] {
        [self.mean, self.min, self.max, self.std, self.median, self.variance]
    }

    /// Population statistics of `values`; `None` when empty.
    pub fn of(values: &[f64]) -> Option<AccelStats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Some(AccelStats {
            mean,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            std: variance.sqrt(),
            median,
            variance,
            missing: false,
        })
    }
}

pub const WINDOW_S: i64 = 60;

/// Statistics over the 1-minute window means of samples in
/// `[prompt - epoch_s, prompt]`.
///
/// Windows tile the epoch from its start; a sample exactly at the prompt
/// belongs to the last window. Empty windows are skipped.
pub fn epoch_accel_stats(samples: &[AccelSample], prompt: i64, epoch_s: i64) -> AccelStats {
    let start = prompt - epoch_s;
    let lo = samples.partition_point(|s| s.timestamp < start);
    let hi = samples.partition_point(|s| s.timestamp <= prompt);
    let n_windows = ((epoch_s + WINDOW_S - 1) / WINDOW_S).max(1) as usize;
    let mut sums = vec![0.0; n_windows];
    let mut counts = vec![0usize; n_windows];
    for s in &samples[lo..hi] {
        let w = (((s.timestamp - start) / WINDOW_S) as usize).min(n_windows - 1);
        sums[w] += accel_magnitude(s);
        counts[w] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    AccelStats::of(&means).unwrap_or(AccelStats::MISSING)
}

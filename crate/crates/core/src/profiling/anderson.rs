// SPDX-License-Identifier: MIT OR Apache-2.0

use super::ProfilingError;
use statrs::function::erf::erfc;

pub const MIN_POINTS: usize = 8;

/// Critical values of the corrected statistic for a normal sample with
/// estimated mean and variance, keyed by significance level.
const CRITICAL: [(f64, f64); 6] = [
    (0.15, 0.576),
    (0.10, 0.656),
    (0.05, 0.787),
    (0.025, 0.918),
    (0.01, 1.092),
    (0.0001, 1.8692),
];

pub fn critical_value(alpha: f64) -> Option<f64> {
    CRITICAL
        .iter()
        .find(|(a, _)| (a - alpha).abs() <= 1e-12 * a)
        .map(|&(_, c)| c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdTest {
    /// Small-sample corrected A²*.
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
}

/// ln Φ(x) without cancellation in the tails.
fn ln_norm_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE).ln()
}

/// Anderson–Darling test of normality with estimated parameters.
///
/// A sample with zero spread is reported as not rejected.
pub fn anderson_darling_normal(values: &[f64], alpha: f64) -> Result<AdTest, ProfilingError> {
    let n = values.len();
    if n < MIN_POINTS {
        return Err(ProfilingError::TooFewPoints { n, min: MIN_POINTS });
    }
    let critical = critical_value(alpha).ok_or(ProfilingError::InvalidAlpha(alpha))?;
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Ok(AdTest {
            statistic: 0.0,
            critical,
            reject: false,
        });
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let s: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (ln_norm_cdf(z[i]) + ln_norm_cdf(-z[n - 1 - i])))
        .sum();
    let a2 = -nf - s / nf;
    let statistic = a2 * (1.0 + 4.0 / nf - 25.0 / (nf * nf));
    Ok(AdTest {
        statistic,
        critical,
        reject: statistic > critical,
    })
}

//! Helpers for slowly convergent mode sums.
//!
//! Mode sums over conjugate pairs often converge only conditionally near
//! boundaries of their domain (the underlying expansions hold in a weak
//! sense there). Averaging partial sums restores a usable limit and gives
//! a cheap tail estimate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// How to account for the part of a series beyond the truncation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailPolicy {
    /// Report only the truncated value.
    None,
    /// Estimate the tail geometrically from the last terms and fold it
    /// into the error budget.
    #[default]
    GeometricEstimate,
}

/// Truncation counts and tolerances shared by all mode/Matsubara sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub qnm_terms: usize,
    pub matsubara_terms: usize,
    pub tail_policy: TailPolicy,
    pub tolerance: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            qnm_terms: 200,
            matsubara_terms: 400,
            tail_policy: TailPolicy::GeometricEstimate,
            tolerance: 1e-3,
        }
    }
}

/// Result of a truncated series evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SeriesResult {
    pub value: Complex64,
    pub terms_used: usize,
    /// Scatter of the late partial sums; an estimate of the truncation
    /// error, not a bound.
    pub tail_estimate: f64,
}

/// Sum `terms` in the given order, returning the plain truncated sum and a
/// tail estimate from the spread of the last few partial sums.
pub fn sum_with_tail(terms: impl Iterator<Item = Complex64>) -> SeriesResult {
    let mut partials = Vec::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for t in terms {
        acc += t;
        partials.push(acc);
    }
    let n = partials.len();
    if n == 0 {
        return SeriesResult {
            value: Complex64::new(0.0, 0.0),
            terms_used: 0,
            tail_estimate: 0.0,
        };
    }
    let last = partials[n - 1];
    let lookback = (n / 4).clamp(1, 32);
    let tail = partials[n.saturating_sub(lookback)..]
        .iter()
        .map(|p| (p - last).norm())
        .fold(0.0, f64::max);
    SeriesResult {
        value: last,
        terms_used: n,
        tail_estimate: tail,
    }
}

/// Cesàro (C,1) average of the partial sums. For conditionally convergent
/// oscillatory sums this converges where the raw partials merely oscillate.
pub fn cesaro(terms: impl Iterator<Item = Complex64>) -> SeriesResult {
    let mut partials = Vec::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for t in terms {
        acc += t;
        partials.push(acc);
    }
    let n = partials.len();
    if n == 0 {
        return SeriesResult {
            value: Complex64::new(0.0, 0.0),
            terms_used: 0,
            tail_estimate: 0.0,
        };
    }
    let mut csum = Complex64::new(0.0, 0.0);
    let mut averages = Vec::with_capacity(n);
    for (i, p) in partials.iter().enumerate() {
        csum += p;
        averages.push(csum / (i as f64 + 1.0));
    }
    let last = averages[n - 1];
    let lookback = (n / 4).clamp(1, 64);
    let tail = averages[n.saturating_sub(lookback)..]
        .iter()
        .map(|p| (p - last).norm())
        .fold(0.0, f64::max);
    SeriesResult {
        value: last,
        terms_used: n,
        tail_estimate: tail,
    }
}

/// Average of the last quarter of the partial sums: Cesàro smoothing of
/// the oscillation without the early-transient drag of the full average.
pub fn tail_average(terms: impl Iterator<Item = Complex64>) -> SeriesResult {
    let mut partials = Vec::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for t in terms {
        acc += t;
        partials.push(acc);
    }
    let n = partials.len();
    if n == 0 {
        return SeriesResult {
            value: Complex64::new(0.0, 0.0),
            terms_used: 0,
            tail_estimate: 0.0,
        };
    }
    let start = n - (n / 4).max(1);
    let window = &partials[start..];
    let mean = window.iter().sum::<Complex64>() / window.len() as f64;
    let scatter = window.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    SeriesResult {
        value: mean,
        terms_used: n,
        tail_estimate: scatter,
    }
}

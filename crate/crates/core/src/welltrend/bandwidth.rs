//! Bandwidth selection by the corrected Akaike criterion
//! `AICc(h) = log σ̂²(h) + 2(tr H + 1)/(n − tr H − 2)`, with `σ̂² = RSS/n`.

use serde::{Deserialize, Serialize};

use super::local_linear::{hat_summary, local_condition, MAX_LOCAL_CONDITION};
use super::TrendError;

/// Number of bandwidths in the default search grid.
pub const GRID_SIZE: usize = 20;

/// Relative floor on `σ̂²` so an exact fit does not send `log σ̂²` to −∞ and
/// let rounding noise pick the bandwidth.
const SIGMA2_REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub h: f64,
    /// Criterion per candidate; `None` where the candidate is inadmissible.
    pub scores: Vec<Option<f64>>,
    /// True when no candidate was admissible and the largest one was used.
    pub fallback: bool,
}

/// `GRID_SIZE` log-spaced bandwidths from `range/50` to `2·range`.
pub fn default_candidates(range: f64) -> Vec<f64> {
    let lo = (range / 50.0).ln();
    let hi = (2.0 * range).ln();
    (0..GRID_SIZE)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_SIZE - 1) as f64).exp())
        .collect()
}

/// AICc at one bandwidth, or `None` when `n − tr H − 2 ≤ 0` or the local fits
/// are degenerate.
pub fn aicc(times: &[f64], values: &[f64], h: f64) -> Option<f64> {
    let n = times.len() as f64;
    let hat = hat_summary(times, values, h).ok()?;
    let denom = n - hat.trace - 2.0;
    if !(denom > 0.0) {
        return None;
    }
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    let sigma2 = (hat.rss / n).max(SIGMA2_REL_FLOOR * mean_sq).max(f64::MIN_POSITIVE);
    Some(sigma2.ln() + 2.0 * (hat.trace + 1.0) / denom)
}

/// Picks the candidate minimizing AICc; ties go to the larger bandwidth.
pub fn select_bandwidth(
    times: &[f64],
    values: &[f64],
    candidates: &[f64],
) -> Result<BandwidthChoice, TrendError> {
    if times.len() < 5 {
        return Err(TrendError::InsufficientData {
            needed: 5,
            got: times.len(),
        });
    }
    if candidates.is_empty() {
        return Err(TrendError::EmptyGrid);
    }
    if let Some(bad) = candidates.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(TrendError::InvalidBandwidth(*bad));
    }
    let scores: Vec<Option<f64>> = candidates.iter().map(|&h| aicc(times, values, h)).collect();
    let mut best: Option<(f64, f64)> = None;
    for (&h, s) in candidates.iter().zip(&scores) {
        let Some(s) = *s else { continue };
        best = match best {
            Some((bh, bs)) if s > bs || (s == bs && h < bh) => Some((bh, bs)),
            _ => Some((h, s)),
        };
    }
    Ok(match best {
        Some((h, _)) => BandwidthChoice {
            h,
            scores,
            fallback: false,
        },
        None => BandwidthChoice {
            h: candidates.iter().copied().fold(f64::MIN, f64::max),
            scores,
            fallback: true,
        },
    })
}

/// Smallest bandwidth, times 1.5, at which every local 2×2 system at the
/// data points and at `eval_times` has condition number below the limit.
pub fn bandwidth_floor(times: &[f64], eval_times: &[f64]) -> f64 {
    let (lo_t, hi_t) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let range = (hi_t - lo_t).max(f64::MIN_POSITIVE);
    let ok = |h: f64| {
        times
            .iter()
            .chain(eval_times)
            .all(|&x| local_condition(times, x, h).is_some_and(|c| c < MAX_LOCAL_CONDITION))
    };
    let (mut lo, mut hi) = (range * 1e-6, range * 1e3);
    if ok(lo) {
        return 1.5 * lo;
    }
    if !ok(hi) {
        return 1.5 * hi;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    1.5 * hi
}

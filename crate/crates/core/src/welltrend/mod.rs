//! Per-well, per-solute time-series analysis: a local linear trend smoother
//! with pointwise 95% bands and instantaneous gradient, parametric
//! linear/log-linear fits, and the Mann-Kendall test.
//!
//! Confidence bands are pointwise, not simultaneous.

mod bandwidth;
mod kernel;
mod local_linear;
mod mann_kendall;
mod parametric;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bandwidth::{aicc, bandwidth_floor, default_candidates, select_bandwidth, BandwidthChoice};
pub use kernel::kernel_weight;
pub use local_linear::{local_linear_fit, LocalLinearFit, MAX_LOCAL_CONDITION};
pub use mann_kendall::{mann_kendall, MannKendallResult};
pub use parametric::{parametric_fit, ParametricFit, ParametricForm};

use crate::dataset::Diagnostic;
use crate::time::date_of_day;

/// Normal quantile for the 95% pointwise band.
pub const CONFIDENCE_Z: f64 = 1.96;

/// Number of equally spaced points in the evaluation grid.
pub const GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrendError {
    #[error("insufficient data: need at least {needed} distinct points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("local fit at t={at} is degenerate for bandwidth {bandwidth}")]
    Degenerate { at: f64, bandwidth: f64 },
    #[error("value {value} at index {index} must be positive on the log scale")]
    NonPositive { index: usize, value: f64 },
    #[error("times and values differ in length")]
    LengthMismatch,
    #[error("bandwidth grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    NaturalLog,
    Linear,
}

/// Local linear trend of one solute at one well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellTrendFit {
    pub well_id: String,
    pub solute: String,
    pub scale: Scale,
    pub eval_times: Vec<NaiveDate>,
    /// Evaluation grid on the day axis (same points as `eval_times`).
    pub eval_days: Vec<f64>,
    pub fitted: Vec<f64>,
    pub se: Vec<f64>,
    /// Per day, on the analysis scale.
    pub derivative: Vec<f64>,
    pub h: f64,
    pub n: usize,
    pub sigma2: f64,
    pub mk: MannKendallResult,
    pub obs_days: Vec<f64>,
    /// Observations on the analysis scale.
    pub obs_values: Vec<f64>,
}

/// Smoother estimate at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendPoint {
    pub fitted: f64,
    pub se: f64,
    pub derivative: f64,
}

pub(crate) fn point_estimate(
    times: &[f64],
    values: &[f64],
    x: f64,
    h: f64,
    sigma: f64,
) -> Result<TrendPoint, TrendError> {
    let k = local_linear::equivalent_kernel(times, x, h)?;
    Ok(TrendPoint {
        fitted: k.level.iter().zip(values).map(|(l, y)| l * y).sum(),
        derivative: k.slope.iter().zip(values).map(|(l, y)| l * y).sum(),
        se: sigma * k.level.iter().map(|l| l * l).sum::<f64>().sqrt(),
    })
}

impl WellTrendFit {
    pub fn time_range(&self) -> (f64, f64) {
        (self.obs_days[0], self.obs_days[self.obs_days.len() - 1])
    }

    /// Smoother at `day`, or `None` outside the observed time range.
    pub fn evaluate(&self, day: f64) -> Option<TrendPoint> {
        let (lo, hi) = self.time_range();
        if !(day >= lo && day <= hi) {
            return None;
        }
        if let Some(i) = self.eval_days.iter().position(|d| *d == day) {
            return Some(TrendPoint {
                fitted: self.fitted[i],
                se: self.se[i],
                derivative: self.derivative[i],
            });
        }
        point_estimate(&self.obs_days, &self.obs_values, day, self.h, self.sigma2.sqrt()).ok()
    }

    /// Maps an analysis-scale value back to concentration units.
    pub fn to_concentration(&self, v: f64) -> f64 {
        match self.scale {
            Scale::NaturalLog => v.exp(),
            Scale::Linear => v,
        }
    }

    /// 95% band `(lower, upper)` in concentration units at grid index `i`.
    pub fn band(&self, i: usize) -> (f64, f64) {
        let (m, s) = (self.fitted[i], self.se[i]);
        (
            self.to_concentration(m - CONFIDENCE_Z * s),
            self.to_concentration(m + CONFIDENCE_Z * s),
        )
    }
}

/// Evaluation grid: `GRID_POINTS` equally spaced days over `[lo, hi]` plus any
/// `extra` days inside that range, sorted and deduplicated.
pub fn eval_grid(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            if i == GRID_POINTS - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64
            }
        })
        .collect();
    grid.extend(extra.iter().copied().filter(|d| *d >= lo && *d <= hi));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Smallest positive value halved; the floor applied to zeros before logging.
pub fn log_floor(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    values
        .into_iter()
        .filter(|v| *v > 0.0)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .map(|m| 0.5 * m)
}

/// Fits the trend smoother for one well/solute series.
///
/// `obs` holds `(day, value)` pairs with distinct days; values are in
/// concentration units and must already be positive when `scale` is log.
/// The bandwidth is chosen by AICc over [`default_candidates`] (or the
/// largest candidate when fewer than five samples exist) and raised to
/// [`bandwidth_floor`] when needed.
pub fn fit_well_trend(
    well_id: &str,
    solute: &str,
    obs: &[(f64, f64)],
    scale: Scale,
    extra_eval: &[f64],
) -> Result<(WellTrendFit, Vec<Diagnostic>), TrendError> {
    let mut obs = obs.to_vec();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let days: Vec<f64> = obs.iter().map(|o| o.0).collect();
    let distinct = local_linear::distinct_count(&days);
    if distinct < 3 {
        return Err(TrendError::InsufficientData { needed: 3, got: distinct });
    }
    if distinct != days.len() {
        return Err(TrendError::InsufficientData {
            needed: days.len(),
            got: distinct,
        });
    }
    let values: Vec<f64> = match scale {
        Scale::Linear => obs.iter().map(|o| o.1).collect(),
        Scale::NaturalLog => obs
            .iter()
            .enumerate()
            .map(|(i, o)| {
                if o.1 > 0.0 {
                    Ok(o.1.ln())
                } else {
                    Err(TrendError::NonPositive { index: i, value: o.1 })
                }
            })
            .collect::<Result<_, _>>()?,
    };
    let mut diags = Vec::new();
    let (lo, hi) = (days[0], days[days.len() - 1]);
    let grid = eval_grid(lo, hi, extra_eval);
    let candidates = default_candidates(hi - lo);
    let mut h = if days.len() >= 5 {
        let choice = select_bandwidth(&days, &values, &candidates)?;
        if choice.fallback {
            diags.push(Diagnostic::warning(
                "BANDWIDTH_FALLBACK",
                None,
                format!("{well_id}/{solute}: no admissible AICc bandwidth; using {:.1} days", choice.h),
            ));
        }
        choice.h
    } else {
        candidates[candidates.len() - 1]
    };
    let floor = bandwidth_floor(&days, &grid);
    if h < floor {
        diags.push(Diagnostic::warning(
            "BANDWIDTH_FLOOR",
            None,
            format!("{well_id}/{solute}: bandwidth raised from {h:.1} to {floor:.1} days"),
        ));
        h = floor;
    }
    let fit = local_linear_fit(&days, &values, &grid, h)?;
    let mk = mann_kendall(&values)?;
    Ok((
        WellTrendFit {
            well_id: well_id.to_string(),
            solute: solute.to_string(),
            scale,
            eval_times: grid.iter().map(|d| date_of_day(*d)).collect(),
            eval_days: grid,
            fitted: fit.fitted,
            se: fit.se,
            derivative: fit.derivative,
            h,
            n: days.len(),
            sigma2: fit.sigma2,
            mk,
            obs_days: days,
            obs_values: values,
        },
        diags,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..n).map(|i| {
            let d = 12000.0 + 91.0 * i as f64;
            (d, f(d - 12000.0))
        }).collect()
    }

    #[test]
    fn log_band_is_positive_and_evaluate_matches_grid() {
        let obs = series(12, |t| (2.0 + 0.001 * t + (t / 200.0).sin() * 0.3).exp());
        let mid = 12000.0 + 91.0 * 5.3;
        let (fit, _) = fit_well_trend("MW-1", "Benzene", &obs, Scale::NaturalLog, &[mid, 1.0]).unwrap();
        assert!(fit.eval_days.contains(&mid));
        assert!(!fit.eval_days.contains(&1.0));
        assert_eq!(fit.eval_days.len(), GRID_POINTS + 1);
        for i in 0..fit.eval_days.len() {
            let (lo, hi) = fit.band(i);
            assert!(lo > 0.0 && hi > lo || fit.se[i] == 0.0);
            assert!(fit.se[i] >= 0.0);
        }
        let i = fit.eval_days.iter().position(|d| *d == mid).unwrap();
        let p = fit.evaluate(mid).unwrap();
        assert_eq!(p.fitted, fit.fitted[i]);
        // off-grid evaluation goes through the same arithmetic as the grid
        let off = 12000.0 + 333.3;
        let direct = local_linear_fit(&fit.obs_days, &fit.obs_values, &[off], fit.h).unwrap();
        assert_eq!(fit.evaluate(off).unwrap().fitted, direct.fitted[0]);
        assert!(fit.evaluate(11000.0).is_none());
    }

    #[test]
    fn small_series_uses_largest_candidate() {
        let obs = series(4, |t| 1.0 + t);
        let (fit, _) = fit_well_trend("A", "X", &obs, Scale::Linear, &[]).unwrap();
        assert_eq!(fit.h, *default_candidates(273.0).last().unwrap());
        assert_eq!(fit.n, 4);
    }

    #[test]
    fn two_samples_is_insufficient() {
        let obs = series(2, |_| 1.0);
        assert!(matches!(
            fit_well_trend("A", "X", &obs, Scale::Linear, &[]),
            Err(TrendError::InsufficientData { .. })
        ));
    }

    #[test]
    fn nonpositive_on_log_scale() {
        let obs = series(5, |t| t);
        assert!(matches!(
            fit_well_trend("A", "X", &obs, Scale::NaturalLog, &[]),
            Err(TrendError::NonPositive { index: 0, .. })
        ));
    }

    #[test]
    fn floor_helper() {
        assert_eq!(log_floor([0.0, 4.0, 2.0, 0.0]), Some(1.0));
        assert_eq!(log_floor([0.0]), None);
    }
}

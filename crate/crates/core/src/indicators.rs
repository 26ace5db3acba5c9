//! Trend and threshold indicator matrix (wells × solutes) at one interval.
//!
//! Trend classes come from the per-well smoother's instantaneous gradient,
//! annualized on the log scale. Threshold classes compare either the latest
//! observed value in the interval (absolute) or the smoother's upper 95%
//! band (statistical) against a per-solute threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Diagnostic, Interval, MonitoringRecord};
use crate::time::{date_of_day, day_number, DAYS_PER_YEAR};
use crate::welltrend::{WellTrendFit, CONFIDENCE_Z};

/// Trend fits keyed by `(well_id, solute)`.
pub type TrendTable = BTreeMap<(String, String), WellTrendFit>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorMode {
    Trend,
    ThresholdAbsolute,
    ThresholdStatistical,
}

impl IndicatorMode {
    pub const ALL: [IndicatorMode; 3] = [
        IndicatorMode::Trend,
        IndicatorMode::ThresholdAbsolute,
        IndicatorMode::ThresholdStatistical,
    ];
}

impl FromStr for IndicatorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "trend" => Ok(IndicatorMode::Trend),
            "threshold-absolute" | "absolute" => Ok(IndicatorMode::ThresholdAbsolute),
            "threshold-statistical" | "statistical" => Ok(IndicatorMode::ThresholdStatistical),
            _ => Err(format!(
                "unknown indicator mode '{s}' (trend|threshold-absolute|threshold-statistical)"
            )),
        }
    }
}

impl fmt::Display for IndicatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndicatorMode::Trend => "trend",
            IndicatorMode::ThresholdAbsolute => "threshold-absolute",
            IndicatorMode::ThresholdStatistical => "threshold-statistical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorClass {
    StrongUp,
    Up,
    Stable,
    Down,
    StrongDown,
    Above,
    Below,
    NonDetect,
    Insufficient,
}

impl IndicatorClass {
    pub fn is_trend(self) -> bool {
        matches!(
            self,
            IndicatorClass::StrongUp
                | IndicatorClass::Up
                | IndicatorClass::Stable
                | IndicatorClass::Down
                | IndicatorClass::StrongDown
        )
    }

    /// The class a reversed series gets.
    pub fn reversed(self) -> IndicatorClass {
        match self {
            IndicatorClass::StrongUp => IndicatorClass::StrongDown,
            IndicatorClass::Up => IndicatorClass::Down,
            IndicatorClass::Down => IndicatorClass::Up,
            IndicatorClass::StrongDown => IndicatorClass::StrongUp,
            other => other,
        }
    }
}

/// Cutoffs on |annual log-slope|: below `stable` is flat, at or above
/// `strong` is a strong trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCutoffs {
    pub stable: f64,
    pub strong: f64,
}

impl Default for TrendCutoffs {
    fn default() -> Self {
        TrendCutoffs {
            stable: 0.1,
            strong: 0.5,
        }
    }
}

impl TrendCutoffs {
    pub fn validate(&self) -> Result<(), String> {
        if self.stable > 0.0 && self.strong > self.stable && self.strong.is_finite() {
            Ok(())
        } else {
            Err(format!(
                "trend cutoffs must satisfy 0 < stable < strong, got {} and {}",
                self.stable, self.strong
            ))
        }
    }

    pub fn classify(&self, slope: f64) -> IndicatorClass {
        let a = slope.abs();
        if a < self.stable {
            IndicatorClass::Stable
        } else if a < self.strong {
            if slope > 0.0 {
                IndicatorClass::Up
            } else {
                IndicatorClass::Down
            }
        } else if slope > 0.0 {
            IndicatorClass::StrongUp
        } else {
            IndicatorClass::StrongDown
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCell {
    pub well_id: String,
    pub solute: String,
    pub mode: IndicatorMode,
    pub class: IndicatorClass,
    /// Annualized log-slope (trend mode).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope: Option<f64>,
    /// Concentration compared against the threshold (threshold modes).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
}

/// Parses `"Benzene:5,Toluene:10"`.
pub fn parse_thresholds(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .rsplit_once(':')
            .ok_or_else(|| format!("threshold '{part}' is not of the form Solute:value"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("threshold for '{}' is not a number: '{value}'", name.trim()))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("threshold for '{}' must be positive, got {v}", name.trim()));
        }
        out.insert(name.trim().to_string(), v);
    }
    Ok(out)
}

/// Time at which a fit is read for interval `iv`: the interval midpoint,
/// clamped into the fit's sampled range. `None` when the interval lies
/// entirely outside that range.
pub fn evaluation_time(fit: &WellTrendFit, iv: &Interval) -> Option<f64> {
    let (lo, hi) = fit.time_range();
    let (start, end) = (day_number(iv.start), day_number(iv.end));
    if start > hi || end <= lo {
        return None;
    }
    Some(iv.midpoint_day().clamp(lo, hi))
}

fn all_non_detect(samples: &[&MonitoringRecord]) -> bool {
    let real: Vec<_> = samples.iter().filter(|r| !r.synthetic).collect();
    !real.is_empty() && real.iter().all(|r| r.censored)
}

fn cell(well: &str, solute: &str, mode: IndicatorMode, class: IndicatorClass) -> IndicatorCell {
    IndicatorCell {
        well_id: well.to_string(),
        solute: solute.to_string(),
        mode,
        class,
        slope: None,
        value: None,
    }
}

/// Trend class at interval `iv`. `samples` are the well/solute records in
/// that interval.
pub fn trend_class(
    well: &str,
    solute: &str,
    fit: Option<&WellTrendFit>,
    samples: &[&MonitoringRecord],
    iv: &Interval,
    cutoffs: &TrendCutoffs,
) -> IndicatorCell {
    let mode = IndicatorMode::Trend;
    if all_non_detect(samples) {
        return cell(well, solute, mode, IndicatorClass::NonDetect);
    }
    let Some(point) = fit.and_then(|f| evaluation_time(f, iv).and_then(|t| f.evaluate(t))) else {
        return cell(well, solute, mode, IndicatorClass::Insufficient);
    };
    let slope = point.derivative * DAYS_PER_YEAR;
    IndicatorCell {
        slope: Some(slope),
        ..cell(well, solute, mode, cutoffs.classify(slope))
    }
}

/// Threshold class at interval `iv` in one of the two threshold modes.
pub fn threshold_class(
    well: &str,
    solute: &str,
    fit: Option<&WellTrendFit>,
    samples: &[&MonitoringRecord],
    iv: &Interval,
    threshold: Option<f64>,
    mode: IndicatorMode,
) -> IndicatorCell {
    debug_assert!(mode != IndicatorMode::Trend);
    let Some(threshold) = threshold.filter(|t| *t > 0.0) else {
        return cell(well, solute, mode, IndicatorClass::Insufficient);
    };
    if all_non_detect(samples) {
        return cell(well, solute, mode, IndicatorClass::NonDetect);
    }
    let above = |v: f64| if v > threshold { IndicatorClass::Above } else { IndicatorClass::Below };
    match mode {
        IndicatorMode::ThresholdAbsolute => {
            let latest = samples
                .iter()
                .max_by(|a, b| a.sample_date.cmp(&b.sample_date).then(a.synthetic.cmp(&b.synthetic).reverse()));
            match latest {
                Some(r) => IndicatorCell {
                    value: Some(r.working),
                    ..cell(well, solute, mode, above(r.working))
                },
                None => cell(well, solute, mode, IndicatorClass::Insufficient),
            }
        }
        _ => {
            let Some((f, p)) = fit.and_then(|f| evaluation_time(f, iv).and_then(|t| f.evaluate(t)).map(|p| (f, p)))
            else {
                return cell(well, solute, mode, IndicatorClass::Insufficient);
            };
            let upper = f.to_concentration(p.fitted + CONFIDENCE_Z * p.se);
            // green only when the whole upper band is strictly below
            let class = if upper < threshold { IndicatorClass::Below } else { IndicatorClass::Above };
            IndicatorCell {
                value: Some(f.to_concentration(p.fitted)),
                ..cell(well, solute, mode, class)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    pub interval: usize,
    pub label: String,
    /// Slice time (interval midpoint) as a date.
    pub t: chrono::NaiveDate,
    pub mode: IndicatorMode,
    /// Well ids, sorted.
    pub rows: Vec<String>,
    /// Solutes in input order.
    pub cols: Vec<String>,
    /// Row-major cells.
    pub cells: Vec<IndicatorCell>,
}

impl IndicatorMatrix {
    pub fn get(&self, well: &str, solute: &str) -> Option<&IndicatorCell> {
        let r = self.rows.iter().position(|w| w == well)?;
        let c = self.cols.iter().position(|s| s == solute)?;
        self.cells.get(r * self.cols.len() + c)
    }
}

/// Complete well × solute matrix at interval `k`.
///
/// Panics if `k` is not a valid interval index.
pub fn indicator_matrix(
    dataset: &Dataset,
    trends: &TrendTable,
    k: usize,
    mode: IndicatorMode,
    thresholds: &BTreeMap<String, f64>,
    cutoffs: &TrendCutoffs,
) -> (IndicatorMatrix, Vec<Diagnostic>) {
    let iv = &dataset.intervals[k];
    let rows = dataset.sorted_well_ids();
    let cols = dataset.solutes.clone();
    let mut diags = Vec::new();
    if mode != IndicatorMode::Trend {
        for s in cols.iter().filter(|s| !thresholds.contains_key(*s)) {
            diags.push(Diagnostic::warning(
                "MISSING_THRESHOLD",
                None,
                format!("no threshold given for {s}; its cells are insufficient"),
            ));
        }
    }
    let mut cells = Vec::with_capacity(rows.len() * cols.len());
    for well in &rows {
        for solute in &cols {
            let samples: Vec<&MonitoringRecord> =
                dataset.records_for(well, solute).filter(|r| r.interval == k).collect();
            let fit = trends.get(&(well.clone(), solute.clone()));
            cells.push(match mode {
                IndicatorMode::Trend => trend_class(well, solute, fit, &samples, iv, cutoffs),
                _ => threshold_class(well, solute, fit, &samples, iv, thresholds.get(solute).copied(), mode),
            });
        }
    }
    (
        IndicatorMatrix {
            interval: k,
            label: iv.label.clone(),
            t: date_of_day(iv.midpoint_day()),
            mode,
            rows,
            cols,
            cells,
        },
        diags,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::welltrend::{fit_well_trend, Scale};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn quarter(start: NaiveDate, end: NaiveDate) -> Interval {
        Interval {
            index: 0,
            label: "q".into(),
            start,
            end,
        }
    }

    fn record(well: &str, date: NaiveDate, value: f64, censored: bool) -> MonitoringRecord {
        MonitoringRecord {
            line: 0,
            well_id: well.into(),
            sample_date: date,
            constituent: "Benzene".into(),
            value,
            censored,
            units: "ug/l".into(),
            working: if censored { value / 2.0 } else { value },
            synthetic: false,
            interval: 0,
        }
    }

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn series_fit(values: impl Fn(f64) -> f64, n: usize) -> WellTrendFit {
        let start = day_number(d(2010, 1, 1));
        let obs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = start + 91.0 * i as f64;
                (t, values((t - start) / DAYS_PER_YEAR))
            })
            .collect();
        fit_well_trend("A", "Benzene", &obs, Scale::NaturalLog, &[]).unwrap().0
    }

    #[test]
    fn constant_data_is_stable() {
        let fit = series_fit(|_| 3.0, 12);
        let iv = quarter(d(2011, 1, 1), d(2011, 4, 1));
        let c = trend_class("A", "Benzene", Some(&fit), &[], &iv, &TrendCutoffs::default());
        assert_eq!(c.class, IndicatorClass::Stable);
        assert!(c.slope.unwrap().abs() < 1e-12);
    }

    #[test]
    fn exponential_growth_is_strong_up() {
        let fit = series_fit(|t| (1.0 + t).exp(), 12);
        let iv = quarter(d(2011, 1, 1), d(2011, 4, 1));
        let c = trend_class("A", "Benzene", Some(&fit), &[], &iv, &TrendCutoffs::default());
        assert!((c.slope.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(c.class, IndicatorClass::StrongUp);
    }

    #[test]
    fn missing_fit_or_out_of_range_is_insufficient() {
        let iv = quarter(d(2011, 1, 1), d(2011, 4, 1));
        let c = trend_class("A", "Benzene", None, &[], &iv, &TrendCutoffs::default());
        assert_eq!(c.class, IndicatorClass::Insufficient);
        let fit = series_fit(|_| 3.0, 6);
        let late = quarter(d(2020, 1, 1), d(2020, 4, 1));
        let c = trend_class("A", "Benzene", Some(&fit), &[], &late, &TrendCutoffs::default());
        assert_eq!(c.class, IndicatorClass::Insufficient);
    }

    #[test]
    fn all_non_detect_cell() {
        let iv = quarter(d(2011, 1, 1), d(2011, 4, 1));
        let r1 = record("A", d(2011, 2, 1), 10.0, true);
        let r2 = record("A", d(2011, 3, 1), 5.0, true);
        let c = trend_class("A", "Benzene", None, &[&r1, &r2], &iv, &TrendCutoffs::default());
        assert_eq!(c.class, IndicatorClass::NonDetect);
        let c = threshold_class("A", "Benzene", None, &[&r1], &iv, Some(1.0), IndicatorMode::ThresholdAbsolute);
        assert_eq!(c.class, IndicatorClass::NonDetect);
    }

    #[test]
    fn absolute_threshold() {
        let iv = quarter(d(2011, 1, 1), d(2011, 4, 1));
        let early = record("A", d(2011, 1, 5), 9.0, false);
        let late = record("A", d(2011, 3, 5), 4.0, false);
        let c = threshold_class("A", "Benzene", None, &[&late, &early], &iv, Some(5.0), IndicatorMode::ThresholdAbsolute);
        assert_eq!((c.class, c.value), (IndicatorClass::Below, Some(4.0)));
        let c = threshold_class("A", "Benzene", None, &[], &iv, Some(5.0), IndicatorMode::ThresholdAbsolute);
        assert_eq!(c.class, IndicatorClass::Insufficient);
        let c = threshold_class("A", "Benzene", None, &[&late], &iv, None, IndicatorMode::ThresholdAbsolute);
        assert_eq!(c.class, IndicatorClass::Insufficient);
    }

    #[test]
    fn statistical_band_straddling_threshold_is_above() {
        // ln 4 with se chosen so the upper band is 5.1
        let se = ((5.1f64).ln() - 4f64.ln()) / CONFIDENCE_Z;
        let mut fit = series_fit(|_| 4.0, 12);
        for s in fit.se.iter_mut() {
            *s = se;
        }
        let iv = quarter(d(2010, 1, 1), d(2012, 10, 1));
        let t = evaluation_time(&fit, &iv).unwrap();
        // evaluate the grid point nearest the slice time directly
        let i = fit.eval_days.iter().position(|x| *x == t);
        if i.is_none() {
            fit.eval_days.push(t);
            fit.fitted.push(4f64.ln());
            fit.se.push(se);
            fit.derivative.push(0.0);
        }
        let c = threshold_class("A", "Benzene", Some(&fit), &[], &iv, Some(5.0), IndicatorMode::ThresholdStatistical);
        assert_eq!(c.class, IndicatorClass::Above);
        assert!((c.value.unwrap() - 4.0).abs() < 1e-9);
        let c = threshold_class("A", "Benzene", Some(&fit), &[], &iv, Some(5.2), IndicatorMode::ThresholdStatistical);
        assert_eq!(c.class, IndicatorClass::Below);
    }

    #[test]
    fn threshold_parsing() {
        let t = parse_thresholds("Benzene:5, Toluene : 10").unwrap();
        assert_eq!(t["Benzene"], 5.0);
        assert_eq!(t["Toluene"], 10.0);
        assert!(parse_thresholds("Benzene=5").is_err());
        assert!(parse_thresholds("Benzene:-1").is_err());
        assert!(parse_thresholds("").unwrap().is_empty());
        assert_eq!("absolute".parse::<IndicatorMode>().unwrap(), IndicatorMode::ThresholdAbsolute);
    }

    #[test]
    fn cutoff_boundaries() {
        let c = TrendCutoffs::default();
        assert_eq!(c.classify(0.0999), IndicatorClass::Stable);
        assert_eq!(c.classify(0.1), IndicatorClass::Up);
        assert_eq!(c.classify(-0.1), IndicatorClass::Down);
        assert_eq!(c.classify(0.5), IndicatorClass::StrongUp);
        assert_eq!(c.classify(-0.7), IndicatorClass::StrongDown);
        assert!(TrendCutoffs { stable: 0.5, strong: 0.1 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn classes_antisymmetric(s in -3.0f64..3.0) {
            let c = TrendCutoffs::default();
            prop_assert_eq!(c.classify(-s), c.classify(s).reversed());
        }

        #[test]
        fn time_reversal_swaps_classes(a in -1.5f64..1.5, b in -0.5f64..0.5, seed in 0u64..50) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..16).map(|_| rng.random_range(-0.2..0.2)).collect();
            let f = |i: usize| (2.0 + a * i as f64 / 4.0 + b * (i as f64 / 4.0).powi(2) + noise[i]).exp();
            let start = day_number(d(2010, 1, 1));
            let fwd: Vec<(f64, f64)> = (0..16).map(|i| (start + 91.0 * i as f64, f(i))).collect();
            let rev: Vec<(f64, f64)> = (0..16).map(|i| (start + 91.0 * i as f64, f(15 - i))).collect();
            let ff = fit_well_trend("A", "X", &fwd, Scale::NaturalLog, &[]).unwrap().0;
            let fr = fit_well_trend("A", "X", &rev, Scale::NaturalLog, &[]).unwrap().0;
            prop_assert_eq!(ff.h, fr.h);
            let c = TrendCutoffs::default();
            for i in 0..16 {
                let t = start + 91.0 * i as f64;
                let mirror = start + 91.0 * (15 - i) as f64;
                let s1 = ff.evaluate(t).unwrap().derivative * DAYS_PER_YEAR;
                let s2 = fr.evaluate(mirror).unwrap().derivative * DAYS_PER_YEAR;
                prop_assert!((s1 + s2).abs() < 1e-9);
                // skip slopes sitting on a cutoff within rounding
                if [0.1, 0.5].iter().all(|k| (s1.abs() - k).abs() > 1e-9) {
                    prop_assert_eq!(c.classify(s2), c.classify(s1).reversed());
                }
            }
        }
    }
}

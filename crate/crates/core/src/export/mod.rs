//! Consumer-facing artifacts: time-slice grids, frame sequences, the well
//! report, the latest snapshot and SVG renderings. Every number here comes
//! straight from the model, trend or flow operations.

pub mod hull;
pub mod svg;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Analysis;
use crate::dataset::{Dataset, Diagnostic, GW, NAPL};
use crate::flow::{self, FlowField, Triangulation};
use crate::indicators::{indicator_matrix, IndicatorMatrix, IndicatorMode};
use crate::stsmoother::{dataset_ranges, StError, StModel};
use crate::time::{date_of_day, day_number};
use crate::welltrend::WellTrendFit;

pub const MAX_GRID: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExportError {
    #[error("unknown solute '{0}'")]
    UnknownSolute(String),
    #[error("no model for {solute}: {reason}")]
    ModelUnavailable { solute: String, reason: String },
    #[error("interval {k} out of range; valid intervals are 0..={max}")]
    IntervalOutOfRange { k: usize, max: usize },
    #[error("dataset has no intervals")]
    NoIntervals,
    #[error("grid size {nx}x{ny} invalid; each side must be between 2 and {MAX_GRID}")]
    BadGrid { nx: usize, ny: usize },
    #[error("interval {k} lies outside the model time range")]
    Extrapolation { k: usize },
    #[error(transparent)]
    Model(#[from] StError),
}

impl ExportError {
    pub fn code(&self) -> &'static str {
        match self {
            ExportError::UnknownSolute(_) => "SOLUTE_NOT_FOUND",
            ExportError::ModelUnavailable { .. } => "MODEL_UNAVAILABLE",
            ExportError::IntervalOutOfRange { .. } | ExportError::NoIntervals => "INTERVAL_OUT_OF_RANGE",
            ExportError::BadGrid { .. } => "INVALID_GRID",
            ExportError::Extrapolation { .. } | ExportError::Model(_) => "EXTRAPOLATION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Flag lattice points outside the wells' convex hull.
    pub mask_hull: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 50, ny: 50, mask_hull: true }
    }
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize) -> GridSpec {
        GridSpec { nx, ny, mask_hull: true }
    }

    pub fn validate(&self) -> Result<(), ExportError> {
        let ok = |n: usize| (2..=MAX_GRID).contains(&n);
        if ok(self.nx) && ok(self.ny) {
            Ok(())
        } else {
            Err(ExportError::BadGrid { nx: self.nx, ny: self.ny })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSample {
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    pub date: NaiveDate,
    /// Reported value (detection threshold when censored).
    pub value: f64,
    pub working: f64,
    pub censored: bool,
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaplSample {
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    pub date: NaiveDate,
    pub thickness: f64,
}

/// Model predictions on a regular lattice at one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub interval: usize,
    pub label: String,
    pub solute: String,
    pub units: Option<String>,
    /// Evaluation time on the day axis and as a date.
    pub t_day: f64,
    pub t: NaiveDate,
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[j * nx + i]` is the prediction at `(xs[i], ys[j])`.
    pub values: Vec<f64>,
    /// Same layout; `true` outside the wells' convex hull.
    pub mask: Vec<bool>,
    pub samples: Vec<SliceSample>,
    pub napl: Vec<NaplSample>,
    pub flow: FlowField,
}

impl SliceGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        lattice(&self.xs, &self.ys, self.t_day)
    }

    /// (min, max) over unmasked values, or over all values when everything is masked.
    pub fn range(&self) -> Option<(f64, f64)> {
        let pick = |masked: bool| {
            self.values
                .iter()
                .zip(&self.mask)
                .filter(|(_, m)| masked || !**m)
                .map(|(v, _)| *v)
                .fold(None, |acc: Option<(f64, f64)>, v| Some(acc.map_or((v, v), |(a, b)| (a.min(v), b.max(v)))))
        };
        pick(false).or_else(|| pick(true))
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    v
}

fn lattice(xs: &[f64], ys: &[f64], t: f64) -> Vec<[f64; 3]> {
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y, t])).collect()
}

/// Time at which a model is sliced for interval `k`: the midpoint clamped into
/// the model's time range, or `None` if the interval misses it entirely.
pub fn slice_time(model: &StModel, dataset: &Dataset, k: usize) -> Option<f64> {
    let iv = &dataset.intervals[k];
    let (lo, hi) = model.time_range();
    let (start, end) = (day_number(iv.start), day_number(iv.end));
    if start > hi || end <= lo {
        return None;
    }
    Some(iv.midpoint_day().clamp(lo, hi))
}

fn check_interval(dataset: &Dataset, k: usize) -> Result<(), ExportError> {
    match dataset.intervals.len() {
        0 => Err(ExportError::NoIntervals),
        n if k >= n => Err(ExportError::IntervalOutOfRange { k, max: n - 1 }),
        _ => Ok(()),
    }
}

pub fn interval_samples(dataset: &Dataset, solute: &str, k: usize) -> (Vec<SliceSample>, Vec<NaplSample>) {
    let mut samples = Vec::new();
    let mut napl = Vec::new();
    for r in dataset.records.iter().filter(|r| r.interval == k) {
        let Some(w) = dataset.well(&r.well_id) else { continue };
        if r.constituent == solute {
            samples.push(SliceSample {
                well_id: r.well_id.clone(),
                x: w.x,
                y: w.y,
                date: r.sample_date,
                value: r.value,
                working: r.working,
                censored: r.censored,
                synthetic: r.synthetic,
            });
        } else if r.constituent == NAPL {
            napl.push(NaplSample { well_id: r.well_id.clone(), x: w.x, y: w.y, date: r.sample_date, thickness: r.value });
        }
    }
    (samples, napl)
}

/// Predictions for `solute` over the wells' bounding box at interval `k`.
pub fn slice_grid(
    model: &StModel,
    dataset: &Dataset,
    tri: Option<&Triangulation>,
    k: usize,
    solute: &str,
    spec: GridSpec,
) -> Result<SliceGrid, ExportError> {
    spec.validate()?;
    check_interval(dataset, k)?;
    let t_day = slice_time(model, dataset, k).ok_or(ExportError::Extrapolation { k })?;
    let [(x0, x1), (y0, y1), _] = dataset_ranges(dataset);
    let xs = axis(x0, x1, spec.nx);
    let ys = axis(y0, y1, spec.ny);
    let points = lattice(&xs, &ys, t_day);
    let values = model.predict(&points)?;
    let mask = if spec.mask_hull {
        let wells: Vec<[f64; 2]> = dataset.wells.iter().map(|w| [w.x, w.y]).collect();
        let h = hull::convex_hull(&wells);
        points.iter().map(|p| !hull::contains(&h, [p[0], p[1]])).collect()
    } else {
        vec![false; points.len()]
    };
    let (samples, napl) = interval_samples(dataset, solute, k);
    let iv = &dataset.intervals[k];
    Ok(SliceGrid {
        interval: k,
        label: iv.label.clone(),
        solute: solute.to_string(),
        units: dataset.units_of(solute).map(str::to_string),
        t_day,
        t: date_of_day(t_day),
        nx: spec.nx,
        ny: spec.ny,
        xs,
        ys,
        values,
        mask,
        samples,
        napl,
        flow: flow::flow_field(dataset, tri, k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorScale {
    pub min: f64,
    pub max: f64,
}

/// One frame per interval with a colour scale shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub solute: String,
    pub scale: Option<ColorScale>,
    /// Number of frames in the full sequence.
    pub total: usize,
    /// Index of `frames[0]` in the full sequence.
    pub offset: usize,
    pub frames: Vec<SliceGrid>,
}

impl FrameSequence {
    /// Frames `offset..offset + limit`, keeping the global scale.
    pub fn page(&self, offset: usize, limit: usize) -> FrameSequence {
        let lo = offset.min(self.frames.len());
        let hi = lo.saturating_add(limit).min(self.frames.len());
        FrameSequence {
            solute: self.solute.clone(),
            scale: self.scale,
            total: self.total,
            offset: self.offset + lo,
            frames: self.frames[lo..hi].to_vec(),
        }
    }
}

pub fn frame_sequence(
    model: &StModel,
    dataset: &Dataset,
    tri: Option<&Triangulation>,
    solute: &str,
    spec: GridSpec,
) -> Result<FrameSequence, ExportError> {
    spec.validate()?;
    let n = dataset.intervals.len();
    let workers = std::thread::available_parallelism().map_or(4, |p| p.get()).min(n.max(1));
    let frames: Vec<Result<SliceGrid, ExportError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|k| (k, slice_grid(model, dataset, tri, k, solute, spec)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().expect("frame worker panicked")).collect();
        all.sort_by_key(|(k, _)| *k);
        all.into_iter().map(|(_, f)| f).collect()
    });
    let frames = frames.into_iter().collect::<Result<Vec<_>, _>>()?;
    let scale = frames
        .iter()
        .filter_map(SliceGrid::range)
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        .map(|(min, max)| ColorScale { min, max });
    Ok(FrameSequence { solute: solute.to_string(), scale, total: n, offset: 0, frames })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub date: NaiveDate,
    pub value: f64,
    pub working: f64,
    pub censored: bool,
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoluteSeries {
    pub solute: String,
    pub units: Option<String>,
    pub observed: Vec<ObservedPoint>,
    pub trend: Option<WellTrendFit>,
    /// Why `trend` is absent when there are observations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trend_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwPoint {
    pub date: NaiveDate,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellBundle {
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    pub series: Vec<SoluteSeries>,
    /// Groundwater elevations, when requested and available.
    pub gw: Option<Vec<GwPoint>>,
    /// Overlay requested but the well has no elevation data.
    pub gw_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellReport {
    pub gw_overlay: bool,
    pub wells: Vec<WellBundle>,
}

/// Per-well time series with trend curves, wells sorted by id.
pub fn well_report(analysis: &Analysis, gw_overlay: bool) -> WellReport {
    let ds = &analysis.dataset;
    let wells = ds
        .sorted_well_ids()
        .into_iter()
        .filter_map(|id| ds.well(&id).cloned())
        .map(|w| {
            let series = ds
                .solutes
                .iter()
                .map(|s| {
                    let observed: Vec<ObservedPoint> = ds
                        .records_for(&w.well_id, s)
                        .map(|r| ObservedPoint {
                            date: r.sample_date,
                            value: r.value,
                            working: r.working,
                            censored: r.censored,
                            synthetic: r.synthetic,
                        })
                        .collect();
                    let trend = analysis.trend(&w.well_id, s).cloned();
                    let trend_failure = analysis
                        .trend_failures
                        .iter()
                        .find(|f| f.well_id.as_deref() == Some(w.well_id.as_str()) && &f.solute == s)
                        .map(|f| f.message.clone());
                    SoluteSeries { solute: s.clone(), units: ds.units_of(s).map(str::to_string), observed, trend, trend_failure }
                })
                .collect();
            let levels: Vec<GwPoint> = ds
                .records_for(&w.well_id, GW)
                .map(|r| GwPoint { date: r.sample_date, elevation: r.value })
                .collect();
            let (gw, gw_missing) = match (gw_overlay, levels.is_empty()) {
                (false, _) => (None, false),
                (true, true) => (None, true),
                (true, false) => (Some(levels), false),
            };
            WellBundle { well_id: w.well_id, x: w.x, y: w.y, series, gw, gw_missing }
        })
        .collect();
    WellReport { gw_overlay, wells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotGrid {
    pub solute: String,
    pub grid: Option<SliceGrid>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&ExportError> for ErrorBody {
    fn from(e: &ExportError) -> Self {
        ErrorBody { code: e.code().into(), message: e.to_string() }
    }
}

/// Most recent interval: one grid per solute and the three indicator matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub interval: usize,
    pub label: String,
    pub grids: Vec<SnapshotGrid>,
    pub matrices: Vec<IndicatorMatrix>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn solute_model(&self, solute: &str) -> Result<&StModel, ExportError> {
        if !self.dataset.solutes.iter().any(|s| s == solute) {
            return Err(ExportError::UnknownSolute(solute.to_string()));
        }
        self.model(solute).ok_or_else(|| ExportError::ModelUnavailable {
            solute: solute.to_string(),
            reason: self
                .model_failures
                .iter()
                .find(|f| f.solute == solute)
                .map_or_else(|| "not fitted".to_string(), |f| f.message.clone()),
        })
    }

    pub fn slice(&self, solute: &str, k: usize, spec: GridSpec) -> Result<SliceGrid, ExportError> {
        check_interval(&self.dataset, k)?;
        slice_grid(self.solute_model(solute)?, &self.dataset, self.triangulation.as_ref(), k, solute, spec)
    }

    pub fn frames(&self, solute: &str, spec: GridSpec) -> Result<FrameSequence, ExportError> {
        frame_sequence(self.solute_model(solute)?, &self.dataset, self.triangulation.as_ref(), solute, spec)
    }

    pub fn indicators(
        &self,
        k: usize,
        mode: IndicatorMode,
        thresholds: &BTreeMap<String, f64>,
        cutoffs: Option<&crate::indicators::TrendCutoffs>,
    ) -> Result<(IndicatorMatrix, Vec<Diagnostic>), ExportError> {
        check_interval(&self.dataset, k)?;
        let cutoffs = cutoffs.unwrap_or(&self.options.trend_cutoffs);
        Ok(indicator_matrix(&self.dataset, &self.trends, k, mode, thresholds, cutoffs))
    }

    pub fn flow(&self, k: usize) -> Result<FlowField, ExportError> {
        check_interval(&self.dataset, k)?;
        Ok(self.flow_field(k))
    }

    pub fn latest_snapshot(&self, thresholds: &BTreeMap<String, f64>, spec: GridSpec) -> Result<Snapshot, ExportError> {
        spec.validate()?;
        let n = self.dataset.intervals.len();
        if n == 0 {
            return Err(ExportError::NoIntervals);
        }
        let k = n - 1;
        let grids = self
            .dataset
            .solutes
            .iter()
            .map(|s| match self.slice(s, k, spec) {
                Ok(g) => SnapshotGrid { solute: s.clone(), grid: Some(g), error: None },
                Err(e) => SnapshotGrid { solute: s.clone(), grid: None, error: Some((&e).into()) },
            })
            .collect();
        let mut matrices = Vec::new();
        let mut diagnostics = Vec::new();
        for mode in IndicatorMode::ALL {
            let (m, d) = self.indicators(k, mode, thresholds, None)?;
            matrices.push(m);
            for d in d {
                if !diagnostics.contains(&d) {
                    diagnostics.push(d);
                }
            }
        }
        Ok(Snapshot { interval: k, label: self.dataset.intervals[k].label.clone(), grids, matrices, diagnostics })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AnalysisOptions;
    use crate::synth;
    use std::sync::OnceLock;

    fn basic() -> &'static Analysis {
        static A: OnceLock<Analysis> = OnceLock::new();
        A.get_or_init(|| {
            let opts = AnalysisOptions { today: NaiveDate::from_ymd_opt(2026, 1, 1), ..Default::default() };
            Analysis::run(synth::basic().tables(), &opts).unwrap()
        })
    }

    #[test]
    fn slice_matches_predict_bitwise() {
        let a = basic();
        let g = a.slice("Benzene", 5, GridSpec::new(13, 9)).unwrap();
        let direct = a.model("Benzene").unwrap().predict(&g.points()).unwrap();
        assert_eq!(g.values.len(), 13 * 9);
        for (u, v) in g.values.iter().zip(&direct) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        assert!(g.values.iter().all(|v| *v > 0.0));
        assert_eq!(g.flow, a.flow_field(5));
    }

    #[test]
    fn hull_mask_sound() {
        let a = basic();
        let g = a.slice("Toluene", 3, GridSpec::new(40, 40)).unwrap();
        let wells: Vec<[f64; 2]> = a.dataset.wells.iter().map(|w| [w.x, w.y]).collect();
        let h = hull::convex_hull(&wells);
        let pts = g.points();
        // bounding box corner (10, 15) is outside the hull of the basic wells
        assert!(g.mask[0]);
        for (p, m) in pts.iter().zip(&g.mask) {
            assert_eq!(*m, !hull::contains(&h, [p[0], p[1]]));
        }
        assert!(g.mask.iter().any(|m| !m));
        let open = a.slice("Toluene", 3, GridSpec { nx: 40, ny: 40, mask_hull: false }).unwrap();
        assert!(open.mask.iter().all(|m| !m));
    }

    #[test]
    fn bad_requests() {
        let a = basic();
        assert!(matches!(a.slice("Benzene", 999, GridSpec::default()), Err(ExportError::IntervalOutOfRange { k: 999, max: 11 })));
        assert!(matches!(a.slice("Nope", 0, GridSpec::default()), Err(ExportError::UnknownSolute(_))));
        assert!(matches!(a.slice("Benzene", 0, GridSpec::new(1, 5)), Err(ExportError::BadGrid { .. })));
        let msg = a.slice("Benzene", 999, GridSpec::default()).unwrap_err().to_string();
        assert!(msg.contains("0..=11"), "{msg}");
    }

    #[test]
    fn frames_compose_and_share_scale() {
        let a = basic();
        let spec = GridSpec::new(10, 8);
        let f = a.frames("Xylene", spec).unwrap();
        assert_eq!(f.frames.len(), a.dataset.intervals.len());
        assert_eq!(f.total, f.frames.len());
        for (k, fr) in f.frames.iter().enumerate() {
            assert_eq!(fr, &a.slice("Xylene", k, spec).unwrap());
        }
        let s = f.scale.unwrap();
        let ranges: Vec<_> = f.frames.iter().map(|g| g.range().unwrap()).collect();
        assert!(ranges.iter().any(|r| r.0 == s.min));
        assert!(ranges.iter().any(|r| r.1 == s.max));
        assert!(ranges.iter().all(|r| r.0 >= s.min && r.1 <= s.max));
        let p = f.page(10, 5);
        assert_eq!((p.offset, p.frames.len(), p.total), (10, 2, 12));
        assert_eq!(p.scale, f.scale);
        assert_eq!(f.page(50, 5).frames.len(), 0);
    }

    #[test]
    fn well_report_passes_data_through() {
        let a = basic();
        let r = well_report(a, true);
        assert_eq!(r.wells.len(), a.dataset.wells.len());
        let missing: Vec<_> = r.wells.iter().filter(|w| w.gw_missing).map(|w| w.well_id.as_str()).collect();
        assert_eq!(missing, ["MW-7", "MW-8"]);
        for w in &r.wells {
            assert_eq!(w.gw.is_some(), !w.gw_missing);
            for s in &w.series {
                let direct: Vec<f64> = a.dataset.records_for(&w.well_id, &s.solute).map(|r| r.working).collect();
                let got: Vec<f64> = s.observed.iter().map(|o| o.working).collect();
                assert_eq!(got, direct);
                assert_eq!(s.trend.as_ref(), a.trend(&w.well_id, &s.solute));
            }
        }
        assert!(well_report(a, false).wells.iter().all(|w| w.gw.is_none() && !w.gw_missing));
    }

    #[test]
    fn snapshot_bundle() {
        let a = basic();
        let th: BTreeMap<String, f64> = [("Benzene", 5.0), ("Toluene", 10.0), ("Xylene", 20.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let s = a.latest_snapshot(&th, GridSpec::default()).unwrap();
        assert_eq!(s.interval, 11);
        assert_eq!(s.grids.len(), 3);
        assert!(s.grids.iter().all(|g| g.grid.is_some()));
        assert_eq!(s.matrices.len(), 3);
        for (m, mode) in s.matrices.iter().zip(IndicatorMode::ALL) {
            assert_eq!(m, &a.indicators(11, mode, &th, None).unwrap().0);
        }
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.len() < 5_000_000, "{} bytes", json.len());
    }
}

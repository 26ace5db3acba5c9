//! Whole-dataset analysis: per-well trends, per-solute smoothers and the well
//! triangulation, fitted once and then queried.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    Dataset, DatasetError, DatasetOptions, Diagnostic, Granularity, NdFraction, RawTables,
    SubstitutionPolicy,
};
use crate::flow::{self, FlowField, Triangulation};
use crate::indicators::{TrendCutoffs, TrendTable};
use crate::stsmoother::{self, LambdaChoice, StConfig, StModel};
use crate::welltrend::{fit_well_trend, log_floor, Scale, WellTrendFit};

pub const ANALYSIS_FILE: &str = "analysis.json";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// `"auto"` or a fixed nonnegative value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for LambdaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LambdaSpec::Auto => s.serialize_str("auto"),
            LambdaSpec::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(LambdaSpec::Fixed(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaSpec::Auto);
        }
        s.parse::<f64>()
            .map(LambdaSpec::Fixed)
            .map_err(|_| format!("lambda must be 'auto' or a number, got '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// 0.5 or 1.0.
    pub nd_fraction: f64,
    pub napl_substitute: bool,
    pub granularity: Granularity,
    pub aquifer: Option<String>,
    /// `[mx, my, mt]`; `None` uses 6, 6, max(6, intervals/2).
    pub basis: Option<[usize; 3]>,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambda: LambdaSpec,
    pub lambda_grid: Option<Vec<f64>>,
    /// Default cutoffs; queries may override them.
    pub trend_cutoffs: TrendCutoffs,
    /// Reference date for rejecting future samples; the current date when unset.
    pub today: Option<NaiveDate>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            nd_fraction: 0.5,
            napl_substitute: false,
            granularity: Granularity::Quarter,
            aquifer: None,
            basis: None,
            degree: 3,
            penalty_order: 2,
            lambda: LambdaSpec::Auto,
            lambda_grid: None,
            trend_cutoffs: TrendCutoffs::default(),
            today: None,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<(), String> {
        if NdFraction::from_factor(self.nd_fraction).is_none() {
            return Err(format!("nd_fraction must be 0.5 or 1.0, got {}", self.nd_fraction));
        }
        if !(1..=5).contains(&self.degree) {
            return Err(format!("degree must be between 1 and 5, got {}", self.degree));
        }
        if !(1..=3).contains(&self.penalty_order) {
            return Err(format!("penalty_order must be 1, 2 or 3, got {}", self.penalty_order));
        }
        if let Some(b) = self.basis {
            if b.iter().any(|m| *m < self.degree + 1 || *m > 60) {
                return Err(format!(
                    "basis sizes must lie between degree + 1 = {} and 60, got {b:?}",
                    self.degree + 1
                ));
            }
        }
        if let LambdaSpec::Fixed(v) = self.lambda {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("lambda must be nonnegative, got {v}"));
            }
        }
        if let Some(g) = &self.lambda_grid {
            if g.is_empty() || g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err("lambda_grid must be a nonempty list of nonnegative numbers".into());
            }
        }
        self.trend_cutoffs.validate()
    }

    pub fn dataset_options(&self, today: NaiveDate) -> DatasetOptions {
        DatasetOptions {
            policy: SubstitutionPolicy {
                nd_fraction: NdFraction::from_factor(self.nd_fraction).unwrap_or_default(),
                napl_substitute: self.napl_substitute,
            },
            granularity: self.granularity,
            aquifer: self.aquifer.clone(),
            today,
        }
    }

    pub fn st_config(&self, intervals: usize) -> StConfig {
        let mut c = StConfig::for_intervals(intervals);
        if let Some([mx, my, mt]) = self.basis {
            (c.mx, c.my, c.mt) = (mx, my, mt);
        }
        c.degree = self.degree;
        c.order = self.penalty_order;
        c.lambda_grid = self.lambda_grid.clone();
        if let LambdaSpec::Fixed(v) = self.lambda {
            c.fixed_lambda = Some(v);
        }
        c
    }
}

/// A fit that could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub well_id: Option<String>,
    pub solute: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoluteModel {
    pub solute: String,
    pub model: StModel,
    pub lambda: LambdaChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub options: AnalysisOptions,
    pub dataset: Dataset,
    #[serde(with = "trend_list")]
    pub trends: TrendTable,
    pub models: BTreeMap<String, SoluteModel>,
    /// Per-well trend failures (usually too few samples).
    pub trend_failures: Vec<FitFailure>,
    /// Per-solute smoother failures.
    pub model_failures: Vec<FitFailure>,
    pub triangulation: Option<Triangulation>,
    pub diagnostics: Vec<Diagnostic>,
}

mod trend_list {
    use super::*;

    pub fn serialize<S: serde::Serializer>(t: &TrendTable, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(t.values())
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<TrendTable, D::Error> {
        let v: Vec<WellTrendFit> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|f| ((f.well_id.clone(), f.solute.clone()), f)).collect())
    }
}

fn trend_code(e: &crate::welltrend::TrendError) -> &'static str {
    use crate::welltrend::TrendError::*;
    match e {
        InsufficientData { .. } => "INSUFFICIENT_DATA",
        NonPositive { .. } => "NON_POSITIVE",
        Degenerate { .. } => "DEGENERATE",
        _ => "TREND_FAILED",
    }
}

fn model_code(e: &stsmoother::StError) -> &'static str {
    use stsmoother::StError::*;
    match e {
        DegenerateRange { .. } => "DEGENERATE_RANGE",
        NoData => "NO_DATA",
        NonPositive => "NON_POSITIVE",
        RankDeficient => "RANK_DEFICIENT",
        BasisTooRich => "BASIS_TOO_RICH",
        _ => "SMOOTHER_FAILED",
    }
}

/// Per-well trend fits for every (well, solute) pair with data.
fn fit_trends(dataset: &Dataset) -> (TrendTable, Vec<FitFailure>, Vec<Diagnostic>) {
    let mids: Vec<f64> = dataset.intervals.iter().map(|iv| iv.midpoint_day()).collect();
    let mut table = TrendTable::new();
    let mut failures = Vec::new();
    let mut diags = Vec::new();
    for solute in &dataset.solutes {
        let floor = log_floor(dataset.records.iter().filter(|r| &r.constituent == solute).map(|r| r.working));
        for well in dataset.sorted_well_ids() {
            // same-day duplicates are averaged
            let mut by_day: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            for r in dataset.records_for(&well, solute) {
                let v = if r.working > 0.0 { r.working } else { floor.unwrap_or(0.0) };
                let e = by_day.entry(r.day() as i64).or_default();
                e.0 += v;
                e.1 += 1;
            }
            let obs: Vec<(f64, f64)> = by_day.into_iter().map(|(d, (s, n))| (d as f64, s / n as f64)).collect();
            if obs.is_empty() {
                continue;
            }
            match fit_well_trend(&well, solute, &obs, Scale::NaturalLog, &mids) {
                Ok((fit, d)) => {
                    diags.extend(d);
                    table.insert((well.clone(), solute.clone()), fit);
                }
                Err(e) => failures.push(FitFailure {
                    well_id: Some(well.clone()),
                    solute: solute.clone(),
                    code: trend_code(&e).into(),
                    message: e.to_string(),
                }),
            }
        }
    }
    (table, failures, diags)
}

impl Analysis {
    /// Validates the tables and fits everything. Dataset errors abort; fit
    /// failures are recorded per well or per solute.
    pub fn run(tables: RawTables, options: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
        options.validate().map_err(AnalysisError::Options)?;
        // not stored back, so output does not depend on the run date
        let options = options.clone();
        let today = options.today.unwrap_or_else(|| chrono::Local::now().date_naive());
        let (dataset, mut diagnostics) = Dataset::build(tables, &options.dataset_options(today))?;

        let config = options.st_config(dataset.intervals.len());
        let (models, model_failures, model_diags) = std::thread::scope(|scope| {
            let handles: Vec<_> = dataset
                .solutes
                .iter()
                .map(|s| {
                    let (dataset, config) = (&dataset, &config);
                    scope.spawn(move || (s.clone(), stsmoother::fit_solute(dataset, s, config)))
                })
                .collect();
            let mut models = BTreeMap::new();
            let mut failures = Vec::new();
            let mut diags = Vec::new();
            for h in handles {
                let (solute, result) = h.join().expect("smoother thread panicked");
                match result {
                    Ok((model, lambda, d)) => {
                        diags.extend(d);
                        models.insert(solute.clone(), SoluteModel { solute, model, lambda });
                    }
                    Err(e) => failures.push(FitFailure {
                        well_id: None,
                        code: model_code(&e).into(),
                        message: format!("{solute}: {e}"),
                        solute,
                    }),
                }
            }
            (models, failures, diags)
        });
        diagnostics.extend(model_diags);

        let (trends, trend_failures, trend_diags) = fit_trends(&dataset);
        diagnostics.extend(trend_diags);

        let triangulation = match flow::triangulate(&dataset) {
            Ok(t) => Some(t),
            Err(e) => {
                diagnostics.push(Diagnostic::warning("FLOW_DISABLED", None, format!("no flow vectors: {e}")));
                None
            }
        };
        Ok(Analysis {
            options,
            dataset,
            trends,
            models,
            trend_failures,
            model_failures,
            triangulation,
            diagnostics,
        })
    }

    /// Reads a dataset directory and runs the analysis.
    pub fn run_dir(dir: &Path, options: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
        Analysis::run(RawTables::read_dir(dir)?, options)
    }

    pub fn trend(&self, well: &str, solute: &str) -> Option<&WellTrendFit> {
        self.trends.get(&(well.to_string(), solute.to_string()))
    }

    pub fn model(&self, solute: &str) -> Option<&StModel> {
        self.models.get(solute).map(|m| &m.model)
    }

    pub fn flow_field(&self, k: usize) -> FlowField {
        flow::flow_field(&self.dataset, self.triangulation.as_ref(), k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("analysis serializes")
    }

    /// Writes `analysis.json`, one model file per solute, the diagnostics and
    /// the canonical dataset into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), AnalysisError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| AnalysisError::Io { path, source }
        };
        std::fs::create_dir_all(dir.join("models")).map_err(io(dir))?;
        let write = |p: std::path::PathBuf, text: String| std::fs::write(&p, text).map_err(io(&p));
        write(dir.join(ANALYSIS_FILE), self.to_json())?;
        for (solute, m) in &self.models {
            let name = format!("{}.json", file_stem(solute));
            write(dir.join("models").join(name), serde_json::to_string_pretty(m).expect("model serializes"))?;
        }
        let report = serde_json::json!({
            "diagnostics": self.diagnostics,
            "trend_failures": self.trend_failures,
            "model_failures": self.model_failures,
        });
        write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&report).expect("json"))?;
        self.dataset.write_dir(&dir.join("dataset"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Analysis, AnalysisError> {
        let path = dir.join(ANALYSIS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| AnalysisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| AnalysisError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// File-name-safe form of a solute name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_json_defaults_and_validation() {
        let o: AnalysisOptions = serde_json::from_str("{}").unwrap();
        assert_eq!(o, AnalysisOptions::default());
        let o: AnalysisOptions = serde_json::from_str(r#"{"lambda": 2.5, "nd_fraction": 1.0, "basis": [5,5,7]}"#).unwrap();
        assert_eq!(o.lambda, LambdaSpec::Fixed(2.5));
        assert!(o.validate().is_ok());
        let o: AnalysisOptions = serde_json::from_str(r#"{"lambda": "auto"}"#).unwrap();
        assert_eq!(o.lambda, LambdaSpec::Auto);
        assert!(serde_json::from_str::<AnalysisOptions>(r#"{"bogus": 1}"#).is_err());
        let bad = AnalysisOptions { nd_fraction: 0.3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AnalysisOptions { basis: Some([2, 6, 6]), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AnalysisOptions { lambda: LambdaSpec::Fixed(-1.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("cis-1,2-DCE"), "cis-1_2-DCE");
    }
}

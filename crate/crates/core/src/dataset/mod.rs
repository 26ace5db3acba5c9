//! Monitoring data: parsing, validation, non-detect/NAPL substitution and
//! binning of sample dates into monitoring intervals.
//!
//! Input is three files in one directory: `monitoring.csv`
//! (`WellID,SampleDate,Constituent,Result,Units`), `wells.csv`
//! (`WellID,X,Y[,Aquifer]`) and an optional `overlays.json` holding
//! GeoJSON-style line features in site coordinates.

mod csvio;
mod intervals;
mod overlay;
mod substitution;
mod validate;
mod value;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{parse_monitoring_csv, parse_wells_csv, write_monitoring_csv, write_wells_csv};
pub use intervals::{bin_intervals, Granularity, Interval};
pub use overlay::{parse_overlays, Overlay};
pub use substitution::{apply_substitution, NdFraction, SubstitutionPolicy};
pub use validate::validate;
pub use value::{parse_value, ValueError};

use crate::time::day_number;

/// Constituent name reserved for groundwater elevation.
pub const GW: &str = "GW";
/// Constituent name reserved for free-phase (NAPL) thickness.
pub const NAPL: &str = "NAPL";

pub fn is_reserved(constituent: &str) -> bool {
    constituent == GW || constituent == NAPL
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset has {} blocking diagnostic(s); first: {}", count_errors(.0), first_error(.0))]
    Invalid(Vec<Diagnostic>),
}

fn count_errors(diags: &[Diagnostic]) -> usize {
    diags.iter().filter(|d| d.severity == Severity::Error).count()
}

fn first_error(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .find(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// Location of an input row: file name plus 1-based line number (header is line 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRef {
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub row: Option<RowRef>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: &str, row: Option<RowRef>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            row,
            message: message.into(),
        }
    }

    pub fn warning(code: &str, row: Option<RowRef>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code: code.to_string(),
            row,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.row {
            Some(r) => write!(f, "{sev}[{}] {}:{}: {}", self.code, r.file, r.line, self.message),
            None => write!(f, "{sev}[{}] {}", self.code, self.message),
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

/// One row of `monitoring.csv` after value parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub line: usize,
    pub well_id: String,
    pub sample_date: NaiveDate,
    pub constituent: String,
    pub value: f64,
    pub censored: bool,
    pub units: String,
}

/// One row of `wells.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellRow {
    pub line: usize,
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    pub aquifer: Option<String>,
}

/// Parsed but not yet validated input tables.
#[derive(Debug, Clone, Default)]
pub struct RawTables {
    pub records: Vec<RawRecord>,
    pub wells: Vec<WellRow>,
    pub overlays: Vec<Overlay>,
    /// Problems found while parsing (malformed rows are dropped and reported here).
    pub diagnostics: Vec<Diagnostic>,
}

impl RawTables {
    pub fn parse(monitoring: &str, wells: &str, overlays: Option<&str>) -> RawTables {
        let (records, mut diagnostics) = parse_monitoring_csv(monitoring);
        let (wells, wd) = parse_wells_csv(wells);
        diagnostics.extend(wd);
        let overlays = match overlays {
            Some(text) => match parse_overlays(text) {
                Ok(o) => o,
                Err(msg) => {
                    diagnostics.push(Diagnostic::error("OVERLAY_PARSE", None, msg));
                    Vec::new()
                }
            },
            None => Vec::new(),
        };
        RawTables {
            records,
            wells,
            overlays,
            diagnostics,
        }
    }

    /// Reads `monitoring.csv`, `wells.csv` and (if present) `overlays.json` from `dir`.
    pub fn read_dir(dir: &Path) -> Result<RawTables, DatasetError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| DatasetError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let monitoring = read("monitoring.csv")?;
        let wells = read("wells.csv")?;
        let overlays = if dir.join("overlays.json").exists() {
            Some(read("overlays.json")?)
        } else {
            None
        };
        Ok(RawTables::parse(&monitoring, &wells, overlays.as_deref()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellLocation {
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aquifer: Option<String>,
}

/// A validated sample with its working (post-substitution) value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitoringRecord {
    /// Source line in `monitoring.csv`; provenance only, ignored by `==`.
    pub line: usize,
    pub well_id: String,
    pub sample_date: NaiveDate,
    pub constituent: String,
    /// Measured value, or the detection threshold when `censored`.
    pub value: f64,
    pub censored: bool,
    pub units: String,
    /// Value used by the models after non-detect substitution.
    pub working: f64,
    /// Record created by NAPL substitution rather than read from input.
    pub synthetic: bool,
    pub interval: usize,
}

impl PartialEq for MonitoringRecord {
    fn eq(&self, other: &Self) -> bool {
        self.well_id == other.well_id
            && self.sample_date == other.sample_date
            && self.constituent == other.constituent
            && self.value.to_bits() == other.value.to_bits()
            && self.censored == other.censored
            && self.units == other.units
            && self.working.to_bits() == other.working.to_bits()
            && self.synthetic == other.synthetic
            && self.interval == other.interval
    }
}

impl MonitoringRecord {
    pub fn day(&self) -> f64 {
        day_number(self.sample_date)
    }

    pub fn is_solute(&self) -> bool {
        !is_reserved(&self.constituent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub policy: SubstitutionPolicy,
    pub granularity: Granularity,
    /// Aquifer zone to analyse; `None` picks the only zone, or the first by name.
    pub aquifer: Option<String>,
    /// Reference date for the future-sample check.
    pub today: NaiveDate,
}

impl DatasetOptions {
    pub fn new(today: NaiveDate) -> Self {
        DatasetOptions {
            policy: SubstitutionPolicy::default(),
            granularity: Granularity::Quarter,
            aquifer: None,
            today,
        }
    }
}

/// Validated, immutable monitoring dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<MonitoringRecord>,
    pub wells: Vec<WellLocation>,
    pub intervals: Vec<Interval>,
    pub overlays: Vec<Overlay>,
    pub policy: SubstitutionPolicy,
    pub granularity: Granularity,
    pub aquifer: Option<String>,
    /// Solute names in order of first appearance.
    pub solutes: Vec<String>,
}

impl Dataset {
    /// Validates `tables` and assembles the dataset. Warnings are returned alongside
    /// the dataset; any error-severity diagnostic aborts with [`DatasetError::Invalid`].
    pub fn build(
        tables: RawTables,
        options: &DatasetOptions,
    ) -> Result<(Dataset, Vec<Diagnostic>), DatasetError> {
        let mut diags = validate(&tables, options.today);
        if has_errors(&diags) {
            return Err(DatasetError::Invalid(diags));
        }

        let zones: BTreeSet<&str> = tables
            .wells
            .iter()
            .filter_map(|w| w.aquifer.as_deref())
            .collect();
        let aquifer = match &options.aquifer {
            Some(a) if zones.contains(a.as_str()) => Some(a.clone()),
            Some(a) => {
                diags.push(Diagnostic::error(
                    "UNKNOWN_AQUIFER",
                    None,
                    format!("aquifer '{a}' not present in wells.csv"),
                ));
                return Err(DatasetError::Invalid(diags));
            }
            None => {
                if zones.len() > 1 {
                    diags.push(Diagnostic::warning(
                        "AQUIFER_DEFAULTED",
                        None,
                        format!(
                            "{} aquifer zones present; analysing '{}'",
                            zones.len(),
                            zones.iter().next().unwrap()
                        ),
                    ));
                }
                zones.iter().next().map(|s| s.to_string())
            }
        };

        let wells: Vec<WellLocation> = tables
            .wells
            .iter()
            .filter(|w| aquifer.is_none() || w.aquifer == aquifer)
            .map(|w| WellLocation {
                well_id: w.well_id.clone(),
                x: w.x,
                y: w.y,
                aquifer: w.aquifer.clone(),
            })
            .collect();
        let well_ids: BTreeSet<&str> = wells.iter().map(|w| w.well_id.as_str()).collect();

        // Duplicates: the last occurrence wins (validate already warned).
        let mut last: HashMap<(&str, NaiveDate, &str), usize> = HashMap::new();
        for (i, r) in tables.records.iter().enumerate() {
            last.insert((&r.well_id, r.sample_date, &r.constituent), i);
        }
        let kept: Vec<&RawRecord> = tables
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| {
                last[&(r.well_id.as_str(), r.sample_date, r.constituent.as_str())] == *i
                    && well_ids.contains(r.well_id.as_str())
            })
            .map(|(_, r)| r)
            .collect();
        if kept.is_empty() {
            diags.push(Diagnostic::error(
                "NO_RECORDS",
                None,
                "no monitoring records remain for the selected aquifer",
            ));
            return Err(DatasetError::Invalid(diags));
        }

        let mut solutes: Vec<String> = Vec::new();
        for r in &kept {
            if !is_reserved(&r.constituent) && !solutes.contains(&r.constituent) {
                solutes.push(r.constituent.clone());
            }
        }

        let records: Vec<MonitoringRecord> = kept
            .iter()
            .map(|r| MonitoringRecord {
                line: r.line,
                well_id: r.well_id.clone(),
                sample_date: r.sample_date,
                constituent: r.constituent.clone(),
                value: r.value,
                censored: r.censored,
                units: r.units.clone(),
                working: r.value,
                synthetic: false,
                interval: 0,
            })
            .collect();
        let (mut records, sub_diags) = apply_substitution(&records, &options.policy);
        diags.extend(sub_diags);

        let dates: Vec<NaiveDate> = records.iter().map(|r| r.sample_date).collect();
        let intervals = bin_intervals(&dates, options.granularity);
        for r in &mut records {
            r.interval = intervals::locate(&intervals, r.sample_date)
                .expect("intervals cover every sample date");
        }

        Ok((
            Dataset {
                records,
                wells,
                intervals,
                overlays: tables.overlays,
                policy: options.policy,
                granularity: options.granularity,
                aquifer,
                solutes,
            },
            diags,
        ))
    }

    pub fn load_dir(
        dir: &Path,
        options: &DatasetOptions,
    ) -> Result<(Dataset, Vec<Diagnostic>), DatasetError> {
        Dataset::build(RawTables::read_dir(dir)?, options)
    }

    pub fn well(&self, id: &str) -> Option<&WellLocation> {
        self.wells.iter().find(|w| w.well_id == id)
    }

    /// Well ids sorted lexicographically.
    pub fn sorted_well_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.wells.iter().map(|w| w.well_id.clone()).collect();
        ids.sort();
        ids
    }

    pub fn records_for<'a>(
        &'a self,
        well_id: &'a str,
        constituent: &'a str,
    ) -> impl Iterator<Item = &'a MonitoringRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.well_id == well_id && r.constituent == constituent)
    }

    pub fn has_napl(&self) -> bool {
        self.records.iter().any(|r| r.constituent == NAPL)
    }

    /// Units shared by all records of a constituent.
    pub fn units_of(&self, constituent: &str) -> Option<&str> {
        self.records
            .iter()
            .find(|r| r.constituent == constituent)
            .map(|r| r.units.as_str())
    }

    /// Canonical `monitoring.csv` text (synthetic NAPL records omitted; they are
    /// regenerated by substitution on re-load).
    pub fn to_monitoring_csv(&self) -> String {
        let rows: Vec<&MonitoringRecord> = self.records.iter().filter(|r| !r.synthetic).collect();
        write_monitoring_csv(rows.into_iter())
    }

    pub fn to_wells_csv(&self) -> String {
        write_wells_csv(&self.wells)
    }

    pub fn overlays_json(&self) -> String {
        overlay::write_overlays(&self.overlays)
    }

    /// Writes the canonical three-file form of this dataset to `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|source| DatasetError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write("monitoring.csv", self.to_monitoring_csv())?;
        write("wells.csv", self.to_wells_csv())?;
        write("overlays.json", self.overlays_json())?;
        Ok(())
    }
}

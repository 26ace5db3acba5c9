use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDate;

use super::{is_reserved, Diagnostic, RawTables, RowRef};

fn mon(line: usize) -> Option<RowRef> {
    Some(RowRef {
        file: "monitoring.csv".into(),
        line,
    })
}

fn wel(line: usize) -> Option<RowRef> {
    Some(RowRef {
        file: "wells.csv".into(),
        line,
    })
}

/// Checks parsed tables for common input errors. Parse diagnostics already in
/// `tables` are included in the output. Error-severity diagnostics block analysis.
pub fn validate(tables: &RawTables, today: NaiveDate) -> Vec<Diagnostic> {
    let mut out = tables.diagnostics.clone();

    let mut seen_wells: HashMap<&str, usize> = HashMap::new();
    let mut coords: HashMap<(u64, u64), &str> = HashMap::new();
    for w in &tables.wells {
        if let Some(first) = seen_wells.insert(&w.well_id, w.line) {
            out.push(Diagnostic::error(
                "DUPLICATE_WELL",
                wel(w.line),
                format!("well '{}' already defined on line {first}", w.well_id),
            ));
        }
        if !w.x.is_finite() || !w.y.is_finite() {
            out.push(Diagnostic::error(
                "BAD_COORDINATE",
                wel(w.line),
                format!("well '{}' has non-finite coordinates", w.well_id),
            ));
            continue;
        }
        let key = ((w.x + 0.0).to_bits(), (w.y + 0.0).to_bits());
        if let Some(other) = coords.insert(key, &w.well_id) {
            out.push(Diagnostic::warning(
                "COINCIDENT_WELLS",
                wel(w.line),
                format!("wells '{other}' and '{}' share coordinates", w.well_id),
            ));
        }
    }

    if tables.records.is_empty() && !crate::dataset::has_errors(&out) {
        out.push(Diagnostic::error("NO_RECORDS", None, "monitoring.csv has no data rows"));
    }

    let mut units: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
    let mut keys: HashMap<(&str, NaiveDate, &str), (usize, f64, bool)> = HashMap::new();
    let mut sampled: HashSet<&str> = HashSet::new();
    for r in &tables.records {
        sampled.insert(&r.well_id);
        if !seen_wells.contains_key(r.well_id.as_str()) {
            out.push(Diagnostic::error(
                "UNKNOWN_WELL",
                mon(r.line),
                format!("well '{}' is not in wells.csv", r.well_id),
            ));
        }
        if r.value < 0.0 {
            out.push(Diagnostic::error(
                "NEGATIVE_VALUE",
                mon(r.line),
                format!("{} value {} is negative", r.constituent, r.value),
            ));
        }
        if r.censored && is_reserved(&r.constituent) {
            out.push(Diagnostic::error(
                "CENSORED_RESERVED",
                mon(r.line),
                format!("ND<X is only valid for solutes, not '{}'", r.constituent),
            ));
        }
        if r.sample_date > today {
            out.push(Diagnostic::error(
                "FUTURE_DATE",
                mon(r.line),
                format!("sample date {} is after {today}", r.sample_date),
            ));
        }
        if r.units.is_empty() {
            out.push(Diagnostic::error(
                "MISSING_UNITS",
                mon(r.line),
                format!("{} record has no units", r.constituent),
            ));
        } else {
            match units.get(r.constituent.as_str()) {
                Some((u, first)) if *u != r.units => out.push(Diagnostic::error(
                    "MIXED_UNITS",
                    mon(r.line),
                    format!(
                        "{} in '{}' but line {first} uses '{u}'",
                        r.constituent, r.units
                    ),
                )),
                Some(_) => {}
                None => {
                    units.insert(&r.constituent, (&r.units, r.line));
                }
            }
        }
        let key = (r.well_id.as_str(), r.sample_date, r.constituent.as_str());
        if let Some((line, v, c)) = keys.insert(key, (r.line, r.value, r.censored)) {
            let note = if v.to_bits() != r.value.to_bits() || c != r.censored {
                "with a different value"
            } else {
                "with the same value"
            };
            out.push(Diagnostic::warning(
                "DUPLICATE_ROW",
                mon(r.line),
                format!(
                    "duplicates line {line} ({}, {}, {}) {note}; keeping this row",
                    r.well_id, r.sample_date, r.constituent
                ),
            ));
        }
    }

    for w in &tables.wells {
        if !sampled.contains(w.well_id.as_str()) {
            out.push(Diagnostic::warning(
                "WELL_WITHOUT_SAMPLES",
                wel(w.line),
                format!("well '{}' has no monitoring records", w.well_id),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{has_errors, Severity};

    fn today() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn codes(mon: &str, wells: &str) -> Vec<(Severity, String)> {
        validate(&RawTables::parse(mon, wells, None), today())
            .into_iter()
            .map(|d| (d.severity, d.code))
            .collect()
    }

    const H: &str = "WellID,SampleDate,Constituent,Result,Units\n";

    #[test]
    fn unknown_well_is_error() {
        let c = codes(&format!("{H}MW-99,2004-01-01,Benzene,1,ug/l\n"), "WellID,X,Y\nMW-1,0,0\n");
        assert!(c.contains(&(Severity::Error, "UNKNOWN_WELL".into())));
    }

    #[test]
    fn duplicate_is_warning() {
        let c = codes(
            &format!("{H}MW-1,2004-01-01,Benzene,1,ug/l\nMW-1,2004-01-01,Benzene,2,ug/l\n"),
            "WellID,X,Y\nMW-1,0,0\n",
        );
        assert_eq!(c, vec![(Severity::Warning, "DUPLICATE_ROW".into())]);
    }

    #[test]
    fn orphan_well_is_warning() {
        let c = codes(&format!("{H}MW-1,2004-01-01,Benzene,1,ug/l\n"), "WellID,X,Y\nMW-1,0,0\nMW-2,1,1\n");
        assert_eq!(c, vec![(Severity::Warning, "WELL_WITHOUT_SAMPLES".into())]);
    }

    #[test]
    fn blocking_rules() {
        let w = "WellID,X,Y\nMW-1,0,0\n";
        let cases = [
            ("MW-1,2004-01-01,Benzene,-1,ug/l", "NEGATIVE_VALUE"),
            ("MW-1,2030-01-01,Benzene,1,ug/l", "FUTURE_DATE"),
            ("MW-1,2004-01-01,GW,ND<1,m", "CENSORED_RESERVED"),
            ("MW-1,2004-01-01,Benzene,1,", "MISSING_UNITS"),
        ];
        for (row, code) in cases {
            let c = codes(&format!("{H}{row}\n"), w);
            assert!(c.contains(&(Severity::Error, code.into())), "{code}: {c:?}");
        }
        let mixed = codes(
            &format!("{H}MW-1,2004-01-01,Benzene,1,ug/l\nMW-1,2004-02-01,Benzene,1,mg/l\n"),
            w,
        );
        assert!(mixed.contains(&(Severity::Error, "MIXED_UNITS".into())));
        let dup_well = codes(&format!("{H}MW-1,2004-01-01,Benzene,1,ug/l\n"), "WellID,X,Y\nMW-1,0,0\nMW-1,1,1\n");
        assert!(dup_well.contains(&(Severity::Error, "DUPLICATE_WELL".into())));
    }

    #[test]
    fn clean_input_has_no_diagnostics() {
        let d = validate(
            &RawTables::parse(&format!("{H}MW-1,2004-01-01,Benzene,ND<1,ug/l\nMW-1,2004-01-01,GW,12.5,m\n"), "WellID,X,Y\nMW-1,0,0\n", None),
            today(),
        );
        assert!(d.is_empty(), "{d:?}");
        assert!(!has_errors(&d));
    }
}

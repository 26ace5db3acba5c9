use chrono::NaiveDate;

use super::value::{format_value, parse_value, ValueError};
use super::{Diagnostic, MonitoringRecord, RawRecord, RowRef, WellLocation, WellRow};

const MONITORING: &str = "monitoring.csv";
const WELLS: &str = "wells.csv";

fn row(file: &str, line: usize) -> Option<RowRef> {
    Some(RowRef {
        file: file.to_string(),
        line,
    })
}

struct Columns {
    idx: Vec<Option<usize>>,
}

impl Columns {
    fn find(headers: &csv::StringRecord, names: &[&str]) -> Columns {
        let idx = names
            .iter()
            .map(|n| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(n)))
            .collect();
        Columns { idx }
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        self.idx[i].and_then(|c| rec.get(c)).unwrap_or("").trim()
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes())
}

fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
}

/// Parses `monitoring.csv`. Rows that cannot be parsed are dropped and reported.
pub fn parse_monitoring_csv(text: &str) -> (Vec<RawRecord>, Vec<Diagnostic>) {
    const NAMES: [&str; 5] = ["WellID", "SampleDate", "Constituent", "Result", "Units"];
    let mut diags = Vec::new();
    let mut out = Vec::new();
    let mut rdr = reader(text);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            diags.push(Diagnostic::error("CSV_PARSE", row(MONITORING, 1), e.to_string()));
            return (out, diags);
        }
    };
    let cols = Columns::find(&headers, &NAMES);
    let missing: Vec<&str> = NAMES
        .iter()
        .zip(&cols.idx)
        .filter(|(_, i)| i.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        diags.push(Diagnostic::error(
            "MISSING_COLUMN",
            row(MONITORING, 1),
            format!("missing column(s): {}", missing.join(", ")),
        ));
        return (out, diags);
    }
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                diags.push(Diagnostic::error("CSV_PARSE", row(MONITORING, line), e.to_string()));
                continue;
            }
        };
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let well_id = cols.get(&rec, 0);
        let date_text = cols.get(&rec, 1);
        let constituent = cols.get(&rec, 2);
        let result = cols.get(&rec, 3);
        let units = cols.get(&rec, 4);
        if well_id.is_empty() || constituent.is_empty() {
            diags.push(Diagnostic::error(
                "MISSING_FIELD",
                row(MONITORING, line),
                "WellID and Constituent must be nonempty",
            ));
            continue;
        }
        let Some(sample_date) = parse_date(date_text) else {
            diags.push(Diagnostic::error(
                "BAD_DATE",
                row(MONITORING, line),
                format!("unparseable SampleDate '{date_text}' (expected YYYY-MM-DD)"),
            ));
            continue;
        };
        let (value, censored) = match parse_value(result) {
            Ok(v) => v,
            Err(e) => {
                let code = match e {
                    ValueError::Malformed(_) => "BAD_VALUE",
                    ValueError::NonPositiveThreshold(_) => "BAD_THRESHOLD",
                };
                diags.push(Diagnostic::error(code, row(MONITORING, line), e.to_string()));
                continue;
            }
        };
        out.push(RawRecord {
            line,
            well_id: well_id.to_string(),
            sample_date,
            constituent: constituent.to_string(),
            value,
            censored,
            units: units.to_string(),
        });
    }
    (out, diags)
}

/// Parses `wells.csv` (`WellID,X,Y` plus optional `Aquifer`).
pub fn parse_wells_csv(text: &str) -> (Vec<WellRow>, Vec<Diagnostic>) {
    const NAMES: [&str; 4] = ["WellID", "X", "Y", "Aquifer"];
    let mut diags = Vec::new();
    let mut out = Vec::new();
    let mut rdr = reader(text);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            diags.push(Diagnostic::error("CSV_PARSE", row(WELLS, 1), e.to_string()));
            return (out, diags);
        }
    };
    let cols = Columns::find(&headers, &NAMES);
    if cols.idx[..3].iter().any(Option::is_none) {
        diags.push(Diagnostic::error(
            "MISSING_COLUMN",
            row(WELLS, 1),
            "wells.csv requires WellID, X and Y columns",
        ));
        return (out, diags);
    }
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                diags.push(Diagnostic::error("CSV_PARSE", row(WELLS, line), e.to_string()));
                continue;
            }
        };
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let well_id = cols.get(&rec, 0);
        let coord = |i: usize| cols.get(&rec, i).parse::<f64>().ok();
        let (Some(x), Some(y)) = (coord(1), coord(2)) else {
            diags.push(Diagnostic::error(
                "BAD_COORDINATE",
                row(WELLS, line),
                format!("well '{well_id}': X and Y must be numbers"),
            ));
            continue;
        };
        if well_id.is_empty() {
            diags.push(Diagnostic::error("MISSING_FIELD", row(WELLS, line), "WellID must be nonempty"));
            continue;
        }
        let aquifer = Some(cols.get(&rec, 3)).filter(|a| !a.is_empty()).map(str::to_string);
        out.push(WellRow {
            line,
            well_id: well_id.to_string(),
            x,
            y,
            aquifer,
        });
    }
    (out, diags)
}

pub fn write_monitoring_csv<'a>(records: impl Iterator<Item = &'a MonitoringRecord>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["WellID", "SampleDate", "Constituent", "Result", "Units"])
        .expect("in-memory write");
    for r in records {
        w.write_record([
            r.well_id.as_str(),
            &r.sample_date.format("%Y-%m-%d").to_string(),
            r.constituent.as_str(),
            &format_value(r.value, r.censored),
            r.units.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn write_wells_csv(wells: &[WellLocation]) -> String {
    let with_aquifer = wells.iter().any(|w| w.aquifer.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["WellID", "X", "Y"];
    if with_aquifer {
        header.push("Aquifer");
    }
    w.write_record(&header).expect("in-memory write");
    for well in wells {
        let mut fields = vec![well.well_id.clone(), format!("{}", well.x), format!("{}", well.y)];
        if with_aquifer {
            fields.push(well.aquifer.clone().unwrap_or_default());
        }
        w.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_bad_rows_with_line_and_token() {
        let text = "WellID,SampleDate,Constituent,Result,Units\n\
                    MW-1,2004-01-01,Benzene,abc,ug/l\n\
                    MW-1,2004/01/01,Benzene,1,ug/l\n\
                    MW-1,2004-01-02,Benzene,\"ND<5\",ug/l\n";
        let (recs, diags) = parse_monitoring_csv(text);
        assert_eq!(recs.len(), 1);
        assert!(recs[0].censored);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].row.as_ref().unwrap().line, 2);
        assert!(diags[0].message.contains("abc"));
        assert_eq!(diags[1].code, "BAD_DATE");
    }

    #[test]
    fn missing_columns() {
        let (_, diags) = parse_monitoring_csv("WellID,Date\nA,2004-01-01\n");
        assert_eq!(diags[0].code, "MISSING_COLUMN");
        let (_, diags) = parse_wells_csv("WellID,X\nA,1\n");
        assert_eq!(diags[0].code, "MISSING_COLUMN");
    }

    #[test]
    fn quoted_fields_and_aquifer() {
        let (wells, diags) = parse_wells_csv("WellID,X,Y,Aquifer\n\"MW,1\",1.5,-2,shallow\nMW-2,3,4,\n");
        assert!(diags.is_empty());
        assert_eq!(wells[0].well_id, "MW,1");
        assert_eq!(wells[0].aquifer.as_deref(), Some("shallow"));
        assert_eq!(wells[1].aquifer, None);
    }
}

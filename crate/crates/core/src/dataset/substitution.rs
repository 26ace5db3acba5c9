use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{is_reserved, Diagnostic, MonitoringRecord, NAPL};

/// Multiplier applied to the detection threshold of a non-detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NdFraction {
    #[default]
    Half,
    Full,
}

impl NdFraction {
    pub fn factor(self) -> f64 {
        match self {
            NdFraction::Half => 0.5,
            NdFraction::Full => 1.0,
        }
    }

    pub fn from_factor(f: f64) -> Option<NdFraction> {
        if f == 0.5 {
            Some(NdFraction::Half)
        } else if f == 1.0 {
            Some(NdFraction::Full)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubstitutionPolicy {
    pub nd_fraction: NdFraction,
    /// Fill solute gaps at NAPL-bearing (well, date) pairs with the site maximum.
    pub napl_substitute: bool,
}

/// Recomputes working values under `policy`.
///
/// Censored records get `nd_fraction × threshold`; others keep their measured
/// value. With `napl_substitute`, every (well, date) holding a NAPL record gains a
/// synthetic record for each solute it lacks, valued at that solute's site-wide
/// maximum detected value. Existing synthetic records are discarded first, so the
/// operation is idempotent.
pub fn apply_substitution(
    records: &[MonitoringRecord],
    policy: &SubstitutionPolicy,
) -> (Vec<MonitoringRecord>, Vec<Diagnostic>) {
    let factor = policy.nd_fraction.factor();
    let mut out: Vec<MonitoringRecord> = records
        .iter()
        .filter(|r| !r.synthetic)
        .map(|r| {
            let mut r = r.clone();
            r.working = if r.censored { factor * r.value } else { r.value };
            r
        })
        .collect();
    let mut diags = Vec::new();
    if !policy.napl_substitute {
        return (out, diags);
    }

    let mut solutes: Vec<&str> = Vec::new();
    for r in &out {
        if !is_reserved(&r.constituent) && !solutes.contains(&r.constituent.as_str()) {
            solutes.push(&r.constituent);
        }
    }
    let present: HashSet<(&str, chrono::NaiveDate, &str)> = out
        .iter()
        .map(|r| (r.well_id.as_str(), r.sample_date, r.constituent.as_str()))
        .collect();
    let napl: BTreeSet<(&str, chrono::NaiveDate, usize, usize)> = out
        .iter()
        .filter(|r| r.constituent == NAPL)
        .map(|r| (r.well_id.as_str(), r.sample_date, r.line, r.interval))
        .collect();

    let mut synthetic = Vec::new();
    for solute in &solutes {
        let detected = out
            .iter()
            .filter(|r| r.constituent == *solute && !r.censored)
            .map(|r| (r.working, r.units.as_str()))
            .fold(None, |acc: Option<(f64, &str)>, (v, u)| match acc {
                Some((m, _)) if m >= v => acc,
                _ => Some((v, u)),
            });
        let Some((max, units)) = detected else {
            if !napl.is_empty() {
                diags.push(Diagnostic::warning(
                    "NAPL_NO_MAXIMUM",
                    None,
                    format!("{solute} has no detected values; NAPL substitution skipped for it"),
                ));
            }
            continue;
        };
        for &(well, date, line, interval) in &napl {
            if present.contains(&(well, date, *solute)) {
                continue;
            }
            synthetic.push(MonitoringRecord {
                line,
                well_id: well.to_string(),
                sample_date: date,
                constituent: solute.to_string(),
                value: max,
                censored: false,
                units: units.to_string(),
                working: max,
                synthetic: true,
                interval,
            });
        }
    }
    if !synthetic.is_empty() {
        diags.push(Diagnostic::warning(
            "NAPL_SUBSTITUTED",
            None,
            format!("{} solute value(s) substituted at NAPL-bearing samples", synthetic.len()),
        ));
    }
    out.extend(synthetic);
    (out, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn rec(well: &str, day: u32, constituent: &str, value: f64, censored: bool) -> MonitoringRecord {
        MonitoringRecord {
            line: 0,
            well_id: well.into(),
            sample_date: NaiveDate::from_ymd_opt(2004, 1, day).unwrap(),
            constituent: constituent.into(),
            value,
            censored,
            units: "ug/l".into(),
            working: value,
            synthetic: false,
            interval: 0,
        }
    }

    fn policy(nd: NdFraction, napl: bool) -> SubstitutionPolicy {
        SubstitutionPolicy {
            nd_fraction: nd,
            napl_substitute: napl,
        }
    }

    #[test]
    fn nd_half_and_full() {
        let r = vec![rec("A", 1, "Benzene", 10.0, true), rec("A", 2, "Benzene", 3.2, false)];
        let (half, _) = apply_substitution(&r, &policy(NdFraction::Half, false));
        assert_eq!(half[0].working, 5.0);
        assert_eq!(half[0].value, 10.0);
        assert_eq!(half[1].working, 3.2);
        let (full, _) = apply_substitution(&r, &policy(NdFraction::Full, false));
        assert_eq!(full[0].working, 10.0);
        assert_eq!(full[1].working, 3.2);
    }

    #[test]
    fn napl_fills_missing_solutes_only() {
        let r = vec![
            rec("A", 1, "Benzene", 40.0, false),
            rec("B", 1, "Benzene", 90.0, false),
            rec("B", 1, "Toluene", 5.0, true),
            rec("C", 3, "NAPL", 0.3, false),
            rec("C", 3, "Toluene", 7.0, false),
        ];
        let (out, diags) = apply_substitution(&r, &policy(NdFraction::Half, true));
        let syn: Vec<_> = out.iter().filter(|r| r.synthetic).collect();
        assert_eq!(syn.len(), 1);
        assert_eq!(syn[0].constituent, "Benzene");
        assert_eq!(syn[0].working, 90.0);
        // measured Toluene at the NAPL sample is kept
        assert_eq!(out.iter().filter(|r| r.well_id == "C" && r.constituent == "Toluene").count(), 1);
        assert!(diags.iter().any(|d| d.code == "NAPL_SUBSTITUTED"));
    }

    #[test]
    fn napl_skips_undetected_solute() {
        let r = vec![rec("A", 1, "Xylene", 1.0, true), rec("B", 1, "NAPL", 0.1, false)];
        let (out, diags) = apply_substitution(&r, &policy(NdFraction::Half, true));
        assert!(out.iter().all(|r| !r.synthetic));
        assert!(diags.iter().any(|d| d.code == "NAPL_NO_MAXIMUM"));
    }

    fn arb_records() -> impl Strategy<Value = Vec<MonitoringRecord>> {
        let one = (0usize..4, 1u32..20, 0usize..3, 0.01f64..100.0, any::<bool>()).prop_map(
            |(w, day, c, v, cens)| {
                let constituent = ["Benzene", "Toluene", "NAPL"][c];
                rec(["A", "B", "C", "D"][w], day, constituent, v, cens && c != 2)
            },
        );
        proptest::collection::vec(one, 1..30)
    }

    proptest! {
        #[test]
        fn idempotent(records in arb_records(), full: bool, napl: bool) {
            let p = policy(if full { NdFraction::Full } else { NdFraction::Half }, napl);
            let (once, _) = apply_substitution(&records, &p);
            let (twice, _) = apply_substitution(&once, &p);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn full_dominates_half(records in arb_records(), napl: bool) {
            let (half, _) = apply_substitution(&records, &policy(NdFraction::Half, napl));
            let (full, _) = apply_substitution(&records, &policy(NdFraction::Full, napl));
            prop_assert_eq!(half.len(), full.len());
            for (h, f) in half.iter().zip(&full) {
                prop_assert!(f.working >= h.working);
                prop_assert_eq!(f.working == h.working, !h.censored);
            }
        }
    }
}

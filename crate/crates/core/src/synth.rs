//! Seeded synthetic monitoring datasets ("basic" and "comprehensive") used as
//! examples and test fixtures. Output is a pure function of the seed.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::RawTables;
use crate::time::DAYS_PER_YEAR;

pub const BASIC_SEED: u64 = 20_140_601;
pub const COMPREHENSIVE_SEED: u64 = 20_140_602;

/// The three input files of a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub monitoring: String,
    pub wells: String,
    pub overlays: Option<String>,
}

impl SynthFiles {
    pub fn tables(&self) -> RawTables {
        RawTables::parse(&self.monitoring, &self.wells, self.overlays.as_deref())
    }

    pub fn write_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("monitoring.csv"), &self.monitoring)?;
        std::fs::write(dir.join("wells.csv"), &self.wells)?;
        if let Some(o) = &self.overlays {
            std::fs::write(dir.join("overlays.json"), o)?;
        }
        Ok(())
    }
}

struct Solute {
    name: &'static str,
    /// Peak concentration at the source at t0 (ug/l).
    peak: f64,
    /// Log growth rate per year at the source.
    rate: f64,
    detection: f64,
}

struct Site {
    wells: Vec<(String, f64, f64)>,
    source: (f64, f64),
    spread: f64,
    /// Spread growth per year (plume migrating outward).
    spread_rate: f64,
    /// Plume drift per year along +x.
    drift: f64,
    solutes: Vec<Solute>,
    start: NaiveDate,
    events: usize,
    gw_wells: usize,
    napl_wells: Vec<usize>,
    noise: f64,
}

fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

fn generate(site: &Site, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, site.noise).expect("valid sd");
    let gw_noise = Normal::new(0.0, 0.02).expect("valid sd");
    let mut rows = Vec::new();
    for e in 0..site.events {
        let base = site.start + Duration::days((e as f64 * DAYS_PER_YEAR / 4.0).round() as i64);
        let years = e as f64 / 4.0;
        let seasonal = 0.15 * (2.0 * std::f64::consts::PI * years).sin();
        for (w, (id, x, y)) in site.wells.iter().enumerate() {
            let date = base + Duration::days(rng.random_range(0..21));
            let napl = site.napl_wells.contains(&w) && e % 3 != 2 && e >= 2;
            if napl {
                let thickness = round_sig(0.05 + 0.3 * rng.random::<f64>(), 3);
                rows.push(format!("{id},{date},NAPL,{thickness},m"));
            }
            if w < site.gw_wells {
                let gw = 30.0 - 0.012 * x - 0.004 * y + seasonal + gw_noise.sample(&mut rng);
                rows.push(format!("{id},{date},GW,{},m", round_sig(gw, 5)));
            }
            if napl {
                // free product prevents solute sampling
                continue;
            }
            let spread = site.spread * (1.0 + site.spread_rate * years);
            let dx = x - site.source.0 - site.drift * years;
            let dy = y - site.source.1;
            let shape = (-(dx * dx + dy * dy) / (2.0 * spread * spread)).exp();
            for s in &site.solutes {
                if rng.random::<f64>() < 0.04 {
                    continue; // missed sample
                }
                let c = s.peak * shape * (s.rate * years).exp() * noise.sample(&mut rng).exp();
                let text = if c < s.detection {
                    format!("ND<{}", s.detection)
                } else {
                    format!("{}", round_sig(c, 3))
                };
                rows.push(format!("{id},{date},{},{text},ug/l", s.name));
            }
        }
    }
    rows
}

fn render(site: &Site, seed: u64, aquifer: bool, overlays: Option<String>) -> SynthFiles {
    let mut monitoring = String::from("WellID,SampleDate,Constituent,Result,Units\n");
    for r in generate(site, seed) {
        monitoring.push_str(&r);
        monitoring.push('\n');
    }
    let mut wells = String::from(if aquifer { "WellID,X,Y,Aquifer\n" } else { "WellID,X,Y\n" });
    for (id, x, y) in &site.wells {
        if aquifer {
            wells.push_str(&format!("{id},{x},{y},Shallow\n"));
        } else {
            wells.push_str(&format!("{id},{x},{y}\n"));
        }
    }
    SynthFiles { monitoring, wells, overlays }
}

/// 8 wells, 3 solutes, 12 quarterly events; groundwater levels at 6 wells.
pub fn basic() -> SynthFiles {
    let coords = [
        (10.0, 40.0),
        (35.0, 62.0),
        (38.0, 22.0),
        (60.0, 45.0),
        (72.0, 70.0),
        (78.0, 15.0),
        (95.0, 48.0),
        (20.0, 85.0),
    ];
    let site = Site {
        wells: coords.iter().enumerate().map(|(i, &(x, y))| (format!("MW-{}", i + 1), x, y)).collect(),
        source: (30.0, 45.0),
        spread: 25.0,
        spread_rate: 0.08,
        drift: 3.0,
        solutes: vec![
            Solute { name: "Benzene", peak: 900.0, rate: -0.35, detection: 5.0 },
            Solute { name: "Toluene", peak: 400.0, rate: 0.0, detection: 5.0 },
            Solute { name: "Xylene", peak: 150.0, rate: 0.3, detection: 10.0 },
        ],
        start: NaiveDate::from_ymd_opt(2012, 1, 10).expect("date"),
        events: 12,
        gw_wells: 6,
        napl_wells: vec![],
        noise: 0.25,
    };
    render(&site, BASIC_SEED, false, None)
}

/// 25 wells, 5 solutes plus groundwater levels and NAPL thickness, 24
/// quarterly events, with a site boundary and building outline.
pub fn comprehensive() -> SynthFiles {
    let mut rng = ChaCha8Rng::seed_from_u64(COMPREHENSIVE_SEED ^ 0x5eed);
    let mut wells = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let x = 20.0 + 40.0 * i as f64 + rng.random_range(-8.0..8.0);
            let y = 15.0 + 30.0 * j as f64 + rng.random_range(-6.0..6.0);
            wells.push((format!("MW-{:02}", wells.len() + 1), round_sig(x, 4), round_sig(y, 4)));
        }
    }
    let site = Site {
        wells,
        source: (60.0, 75.0),
        spread: 40.0,
        spread_rate: 0.06,
        drift: 4.0,
        solutes: vec![
            Solute { name: "Benzene", peak: 2500.0, rate: -0.25, detection: 1.0 },
            Solute { name: "Toluene", peak: 1200.0, rate: -0.1, detection: 1.0 },
            Solute { name: "EthylBenzene", peak: 500.0, rate: 0.0, detection: 1.0 },
            Solute { name: "Xylene", peak: 800.0, rate: 0.15, detection: 2.0 },
            Solute { name: "MTBE", peak: 300.0, rate: 0.35, detection: 5.0 },
        ],
        start: NaiveDate::from_ymd_opt(2010, 1, 5).expect("date"),
        events: 24,
        gw_wells: 25,
        // wells nearest the source
        napl_wells: vec![6, 7],
        noise: 0.3,
    };
    let overlays = serde_json::json!({
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"name": "Site boundary"},
                "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [200, 0], [200, 150], [0, 150], [0, 0]]]}
            },
            {
                "type": "Feature",
                "properties": {"name": "Building"},
                "geometry": {"type": "Polygon", "coordinates": [[[100, 100], [140, 100], [140, 130], [100, 130], [100, 100]]]}
            },
            {
                "type": "Feature",
                "properties": {"name": "Drain"},
                "geometry": {"type": "LineString", "coordinates": [[0, 5], [200, 8]]}
            }
        ]
    });
    let overlays = serde_json::to_string_pretty(&overlays).expect("json") + "\n";
    render(&site, COMPREHENSIVE_SEED, true, Some(overlays))
}

/// Reference date used for the checked-in fixture outputs.
pub fn fixture_today() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 1, 1).expect("date")
}

/// Compact record of an analysis, checked in next to the fixtures: the chosen
/// λ and edf per solute and the trend classes at the final interval.
pub fn fixture_summary(a: &crate::analysis::Analysis) -> serde_json::Value {
    use crate::indicators::IndicatorMode;
    let k = a.dataset.intervals.len() - 1;
    let models: serde_json::Map<String, serde_json::Value> = a
        .models
        .iter()
        .map(|(s, m)| (s.clone(), serde_json::json!({"lambda": m.model.lambda, "edf": m.model.edf, "n": m.model.n})))
        .collect();
    let (m, _) = a
        .indicators(k, IndicatorMode::Trend, &Default::default(), None)
        .expect("final interval exists");
    let classes: Vec<String> = m
        .cells
        .iter()
        .map(|c| format!("{}/{}: {}", c.well_id, c.solute, serde_json::to_value(c.class).expect("json").as_str().unwrap_or("")))
        .collect();
    serde_json::json!({
        "wells": a.dataset.wells.len(),
        "solutes": a.dataset.solutes,
        "intervals": a.dataset.intervals.len(),
        "records": a.dataset.records.len(),
        "models": models,
        "trend_fits": a.trends.len(),
        "final_trend_classes": classes,
    })
}

/// Looks up a fixture by name.
pub fn by_name(name: &str) -> Option<SynthFiles> {
    match name {
        "basic" => Some(basic()),
        "comprehensive" => Some(comprehensive()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, DatasetOptions, NAPL};

    fn build(files: &SynthFiles) -> Dataset {
        let today = NaiveDate::from_ymd_opt(2026, 1, 1).unwrap();
        Dataset::build(files.tables(), &DatasetOptions::new(today)).unwrap().0
    }

    #[test]
    fn deterministic() {
        assert_eq!(basic(), basic());
        assert_eq!(comprehensive(), comprehensive());
    }

    #[test]
    fn basic_shape() {
        let d = build(&basic());
        assert_eq!(d.wells.len(), 8);
        assert_eq!(d.solutes, ["Benzene", "Toluene", "Xylene"]);
        assert_eq!(d.intervals.len(), 12);
        let gw_wells: std::collections::BTreeSet<_> =
            d.records.iter().filter(|r| r.constituent == "GW").map(|r| &r.well_id).collect();
        assert_eq!(gw_wells.len(), 6);
        assert!(d.records.iter().any(|r| r.censored));
    }

    #[test]
    fn comprehensive_shape() {
        let d = build(&comprehensive());
        assert_eq!(d.wells.len(), 25);
        assert_eq!(d.solutes.len(), 5);
        assert_eq!(d.intervals.len(), 24);
        assert!(d.records.iter().any(|r| r.constituent == NAPL));
        assert!(d.records.iter().any(|r| r.censored));
        assert_eq!(d.overlays.len(), 3);
    }
}

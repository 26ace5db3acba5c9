use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use aquitrend::analysis::{Analysis, AnalysisOptions};
use aquitrend::export::{FrameSequence, GridSpec, SliceGrid, Snapshot};
use aquitrend::synth;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aquitrend"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn analyze_basic(out: &Path) -> Output {
    run(&["analyze", p(&fixtures().join("basic")), "--out", p(out), "--today", "2026-01-01"])
}

#[test]
fn checked_in_fixtures_match_generator() {
    for name in ["basic", "comprehensive"] {
        let files = synth::by_name(name).unwrap();
        let dir = fixtures().join(name);
        assert_eq!(std::fs::read_to_string(dir.join("monitoring.csv")).unwrap(), files.monitoring, "{name}");
        assert_eq!(std::fs::read_to_string(dir.join("wells.csv")).unwrap(), files.wells, "{name}");
        assert_eq!(std::fs::read_to_string(dir.join("overlays.json")).ok(), files.overlays, "{name}");
    }
}

#[test]
fn expected_summaries_reproduce() {
    for name in ["basic", "comprehensive"] {
        let opts = AnalysisOptions { today: Some(synth::fixture_today()), ..Default::default() };
        let a = Analysis::run_dir(&fixtures().join(name), &opts).unwrap();
        let got = synth::fixture_summary(&a);
        let text = std::fs::read_to_string(fixtures().join("expected").join(format!("{name}.json"))).unwrap();
        let want: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["wells", "solutes", "intervals", "records", "trend_fits", "final_trend_classes"] {
            assert_eq!(got[key], want[key], "{name}: {key}");
        }
        for (s, m) in want["models"].as_object().unwrap() {
            let g = &got["models"][s];
            assert_eq!(g["lambda"], m["lambda"], "{name}/{s}");
            assert_eq!(g["n"], m["n"]);
            let (x, y) = (g["edf"].as_f64().unwrap(), m["edf"].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-8 * y, "{name}/{s}: edf {x} vs {y}");
        }
    }
}

#[test]
fn validate_exit_codes() {
    let out = run(&["validate", p(&fixtures().join("comprehensive"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok: 25 wells, 5 solutes, 24 intervals"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("monitoring.csv"), "WellID,SampleDate,Constituent,Result,Units\nMW-9,2010-01-01,Benzene,abc,ug/l\n").unwrap();
    std::fs::write(dir.path().join("wells.csv"), "WellID,X,Y\nMW-1,0,0\n").unwrap();
    let out = run(&["validate", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("BAD_VALUE"), "{stdout}");

    let out = run(&["validate", p(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!out.stderr.is_empty());
}

#[test]
fn analyze_then_slice_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("a");
    let out = analyze_basic(&out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["analysis.json", "diagnostics.json", "models/Benzene.json", "dataset/monitoring.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let out = run(&["slice", p(&out_dir), "--solute", "Toluene", "--interval", "6", "--nx", "30", "--ny", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let grid: SliceGrid = serde_json::from_slice(&out.stdout).unwrap();

    let opts = AnalysisOptions { today: chrono::NaiveDate::from_ymd_opt(2026, 1, 1), ..Default::default() };
    let direct = Analysis::run_dir(&fixtures().join("basic"), &opts).unwrap().slice("Toluene", 6, GridSpec::new(30, 20)).unwrap();
    assert_eq!(grid.values.len(), direct.values.len());
    for (a, b) in grid.values.iter().zip(&direct.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(grid, direct);

    // same inputs and flags, same bytes
    let again = run(&["slice", p(&out_dir), "--solute", "Toluene", "--interval", "6", "--nx", "30", "--ny", "20"]);
    assert_eq!(out.stdout, again.stdout);
    let second = dir.path().join("b");
    assert_eq!(analyze_basic(&second).status.code(), Some(0));
    for f in ["analysis.json", "diagnostics.json", "models/Xylene.json", "dataset/monitoring.csv"] {
        assert_eq!(std::fs::read(out_dir.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn slice_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(analyze_basic(dir.path()).status.code(), Some(0));
    let out = run(&["slice", p(dir.path()), "--solute", "Benzene", "--interval", "999"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0..=11"), "{err}");

    let out = run(&["slice", p(dir.path()), "--solute", "Benzene", "--interval", "1", "--nx", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["slice", p(dir.path()), "--solute", "Benzene", "--interval", "1", "--svg"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["slice", p(&dir.path().join("nothing")), "--solute", "Benzene", "--interval", "1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn analyze_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", p(&fixtures().join("basic")), "--out", p(dir.path()), "--nd-fraction", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["analyze", p(&dir.path().join("none")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    // too rich a basis for the basic data: every smoother fails
    let out = run(&[
        "analyze",
        p(&fixtures().join("basic")),
        "--out",
        p(&dir.path().join("rich")),
        "--basis",
        "20,20,20",
        "--lambda",
        "0",
        "--today",
        "2026-01-01",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("rich/analysis.json").exists());
}

#[test]
fn frames_snapshot_report_with_svg() {
    let dir = tempfile::tempdir().unwrap();
    let a_dir = dir.path().join("a");
    assert_eq!(analyze_basic(&a_dir).status.code(), Some(0));
    let a = Analysis::load(&a_dir).unwrap();
    let out_dir = dir.path().join("out");

    let out = run(&["frames", p(&a_dir), "--solute", "Benzene", "--nx", "12", "--ny", "10", "--out", p(&out_dir), "--svg"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let f: FrameSequence = serde_json::from_slice(&std::fs::read(out_dir.join("frames-Benzene.json")).unwrap()).unwrap();
    assert_eq!(f, a.frames("Benzene", GridSpec::new(12, 10)).unwrap());
    for k in 0..12 {
        let svg = std::fs::read_to_string(out_dir.join(format!("frames-Benzene-{k:03}.svg"))).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg.matches("class=\"well\"").count(), 8);
    }

    let th = dir.path().join("th.json");
    std::fs::write(&th, r#"{"Benzene": 5, "Toluene": 10, "Xylene": 20}"#).unwrap();
    let out = run(&["snapshot", p(&a_dir), "--thresholds", p(&th), "--out", p(&out_dir), "--svg"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s: Snapshot = serde_json::from_slice(&std::fs::read(out_dir.join("snapshot.json")).unwrap()).unwrap();
    let thresholds = [("Benzene", 5.0), ("Toluene", 10.0), ("Xylene", 20.0)].map(|(k, v)| (k.to_string(), v)).into();
    assert_eq!(s, a.latest_snapshot(&thresholds, GridSpec::default()).unwrap());
    for name in ["snapshot-Benzene.svg", "snapshot-trend.svg", "snapshot-threshold-statistical.svg"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }

    let out = run(&["report", p(&a_dir), "--gw"]);
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["wells"].as_array().unwrap().len(), 8);
}

#[test]
fn serve_answers_requests() {
    let data = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["serve", "--data", p(data.path()), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();
    let mut s = std::net::TcpStream::connect(&addr).unwrap();
    s.write_all(b"GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with("ok"));
}

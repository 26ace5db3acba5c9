//! Static SVG 1.1 renderings. Output is deterministic: fixed-precision
//! coordinates, no ids derived from time or randomness.

use std::fmt::Write;

use super::{ColorScale, SliceGrid, SoluteSeries};
use crate::dataset::Overlay;
use crate::indicators::{IndicatorClass, IndicatorMatrix};
use crate::welltrend::{Scale, CONFIDENCE_Z};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 40.0;
const LEVELS: usize = 10;
/// Pale yellow to dark red, low to high.
const PALETTE: [&str; LEVELS] = [
    "#ffffcc", "#ffeda0", "#fed976", "#feb24c", "#fd8d3c", "#fc4e2a", "#e31a1c", "#bd0026", "#9e0026", "#800026",
];
const DETECT: &str = "#d00000";
const NON_DETECT: &str = "#000000";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// Colour band of `v` on a log scale.
pub fn color_level(v: f64, scale: ColorScale) -> usize {
    if !(scale.max > scale.min) || scale.min <= 0.0 {
        return 0;
    }
    let u = (v.ln() - scale.min.ln()) / (scale.max.ln() - scale.min.ln());
    ((u * LEVELS as f64).floor().max(0.0) as usize).min(LEVELS - 1)
}

struct Frame {
    x0: f64,
    y0: f64,
    k: f64,
    height: f64,
}

impl Frame {
    fn new(xs: (f64, f64), ys: (f64, f64)) -> Frame {
        let w = (xs.1 - xs.0).max(1e-9);
        let h = (ys.1 - ys.0).max(1e-9);
        let k = (WIDTH - 2.0 * MARGIN) / w;
        Frame { x0: xs.0, y0: ys.0, k, height: h * k + 2.0 * MARGIN + 30.0 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.k
    }

    // y grows upward in site coordinates
    fn py(&self, y: f64) -> f64 {
        self.height - MARGIN - (y - self.y0) * self.k
    }
}

fn header(out: &mut String, height: f64) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(WIDTH),
        h = num(height)
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, num(WIDTH), num(height));
}

/// Spatial plot: colour-banded field, overlays, flow arrows and labelled wells.
/// `wells` lists every well marker; samples in `grid` provide the labels.
pub fn render_slice(grid: &SliceGrid, wells: &[(String, f64, f64)], overlays: &[Overlay], scale: Option<ColorScale>) -> String {
    let (xs, ys) = (&grid.xs, &grid.ys);
    let f = Frame::new((xs[0], xs[xs.len() - 1]), (ys[0], ys[ys.len() - 1]));
    let scale = scale.or_else(|| grid.range().map(|(min, max)| ColorScale { min, max }));
    let mut out = String::new();
    header(&mut out, f.height);
    let units = grid.units.as_deref().map(|u| format!(" ({})", esc(u))).unwrap_or_default();
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="20" font-family="sans-serif" font-size="14">{}{} — {}</text>"#,
        num(MARGIN),
        esc(&grid.solute),
        units,
        esc(&grid.label)
    );

    let dx = f.k * (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let dy = f.k * (ys[ys.len() - 1] - ys[0]) / (ys.len() - 1) as f64;
    out.push_str("<g class=\"field\" stroke=\"none\">\n");
    if let Some(scale) = scale {
        for (j, y) in ys.iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                let idx = j * grid.nx + i;
                if grid.mask[idx] {
                    continue;
                }
                let _ = writeln!(
                    out,
                    r#"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                    num(f.px(*x) - dx / 2.0),
                    num(f.py(*y) - dy / 2.0),
                    num(dx),
                    num(dy),
                    PALETTE[color_level(grid.values[idx], scale)]
                );
            }
        }
    }
    out.push_str("</g>\n");

    out.push_str("<g class=\"overlays\" fill=\"none\" stroke=\"#555555\" stroke-width=\"1\">\n");
    for o in overlays {
        let pts: Vec<String> = o.points.iter().map(|p| format!("{},{}", num(f.px(p[0])), num(f.py(p[1])))).collect();
        let _ = writeln!(out, r#"<polyline class="overlay" points="{}"/>"#, pts.join(" "));
    }
    out.push_str("</g>\n");

    if !grid.flow.vectors.is_empty() {
        out.push_str(
            "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">\
<path d=\"M0,0 L6,3 L0,6 z\" fill=\"#0044aa\"/></marker></defs>\n",
        );
        out.push_str("<g class=\"flow\" stroke=\"#0044aa\" stroke-width=\"1.5\">\n");
        let rmax = grid.flow.vectors.iter().map(|v| v.r).fold(0.0, f64::max);
        for v in &grid.flow.vectors {
            let Some((_, x, y)) = wells.iter().find(|w| w.0 == v.well_id) else { continue };
            let len = 0.06 * WIDTH * if rmax > 0.0 { v.r / rmax } else { 0.0 };
            let th = v.theta.to_radians();
            let (x1, y1) = (f.px(*x), f.py(*y));
            let _ = writeln!(
                out,
                r#"<line class="arrow" x1="{}" y1="{}" x2="{}" y2="{}" marker-end="url(#head)"/>"#,
                num(x1),
                num(y1),
                num(x1 + len * th.cos()),
                num(y1 - len * th.sin())
            );
        }
        out.push_str("</g>\n");
    }

    out.push_str("<g class=\"wells\" font-family=\"sans-serif\" font-size=\"10\">\n");
    for (id, x, y) in wells {
        let (cx, cy) = (f.px(*x), f.py(*y));
        let _ = writeln!(out, r##"<circle class="well" cx="{}" cy="{}" r="3" fill="#333333"/>"##, num(cx), num(cy));
        // latest sample in the interval labels the well
        let sample = grid.samples.iter().filter(|s| &s.well_id == id).max_by_key(|s| s.date);
        let napl = grid.napl.iter().filter(|s| &s.well_id == id).max_by_key(|s| s.date);
        let (text, color) = match (sample, napl) {
            (_, Some(n)) => (format!("NAPL {}", n.thickness), DETECT),
            (Some(s), None) if s.censored => (format!("ND&lt;{}", s.value), NON_DETECT),
            (Some(s), None) => (format!("{}", s.value), DETECT),
            (None, None) => (String::new(), NON_DETECT),
        };
        let _ = writeln!(
            out,
            r#"<text class="label" x="{}" y="{}" fill="{}">{} {}</text>"#,
            num(cx + 5.0),
            num(cy - 5.0),
            color,
            esc(id),
            text
        );
    }
    out.push_str("</g>\n");

    if let Some(scale) = scale {
        out.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"9\">\n");
        for (i, c) in PALETTE.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="20" height="8" fill="{c}"/>"#,
                num(WIDTH - MARGIN - 20.0 * (LEVELS - i) as f64),
                num(24.0)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20">{}</text><text x="{}" y="20" text-anchor="end">{}</text>"#,
            num(WIDTH - MARGIN - 20.0 * LEVELS as f64),
            sig(scale.min),
            num(WIDTH - MARGIN),
            sig(scale.max)
        );
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

fn sig(v: f64) -> String {
    format!("{v:.3e}")
}

/// Time-series plot of one well/solute: observations, smoother and band on
/// the analysis scale.
pub fn render_trend(well_id: &str, series: &SoluteSeries) -> String {
    let height = 400.0;
    let mut out = String::new();
    header(&mut out, height);
    let log = series.trend.as_ref().map_or(true, |t| t.scale == Scale::NaturalLog);
    let tf = |v: f64| if log { v.max(1e-300).ln() } else { v };
    let obs: Vec<(f64, f64, bool)> = series
        .observed
        .iter()
        .map(|o| (crate::time::day_number(o.date), tf(o.working), o.censored))
        .collect();
    let mut t_lo = obs.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let mut t_hi = obs.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
    let mut v_lo = obs.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    let mut v_hi = obs.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    if let Some(t) = &series.trend {
        for i in 0..t.eval_days.len() {
            t_lo = t_lo.min(t.eval_days[i]);
            t_hi = t_hi.max(t.eval_days[i]);
            v_lo = v_lo.min(t.fitted[i] - CONFIDENCE_Z * t.se[i]);
            v_hi = v_hi.max(t.fitted[i] + CONFIDENCE_Z * t.se[i]);
        }
    }
    let units = series.units.as_deref().unwrap_or("");
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="20" font-family="sans-serif" font-size="14">{} — {}{}</text>"#,
        num(MARGIN),
        esc(well_id),
        esc(&series.solute),
        if log { format!(" (ln {})", esc(units)) } else { format!(" ({})", esc(units)) }
    );
    if !(t_lo.is_finite() && v_lo.is_finite()) {
        out.push_str("</svg>\n");
        return out;
    }
    let span_t = (t_hi - t_lo).max(1.0);
    let span_v = (v_hi - v_lo).max(1e-9);
    let px = |t: f64| MARGIN + (t - t_lo) / span_t * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| height - MARGIN - (v - v_lo) / span_v * (height - 2.0 * MARGIN - 20.0);
    let _ = writeln!(
        out,
        r##"<g class="axes" stroke="#000000"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{b}" x2="{m}" y2="{t}"/></g>"##,
        m = num(MARGIN),
        b = num(height - MARGIN),
        r = num(WIDTH - MARGIN),
        t = num(MARGIN)
    );
    if let Some(t) = &series.trend {
        let upper: Vec<String> = (0..t.eval_days.len())
            .map(|i| format!("{},{}", num(px(t.eval_days[i])), num(py(t.fitted[i] + CONFIDENCE_Z * t.se[i]))))
            .collect();
        let lower: Vec<String> = (0..t.eval_days.len())
            .rev()
            .map(|i| format!("{},{}", num(px(t.eval_days[i])), num(py(t.fitted[i] - CONFIDENCE_Z * t.se[i]))))
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon class="band" points="{} {}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> =
            (0..t.eval_days.len()).map(|i| format!("{},{}", num(px(t.eval_days[i])), num(py(t.fitted[i])))).collect();
        let _ = writeln!(
            out,
            r##"<polyline class="smoother" points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
            line.join(" ")
        );
    }
    for (t, v, censored) in &obs {
        let _ = writeln!(
            out,
            r#"<circle class="obs" cx="{}" cy="{}" r="3" fill="{}"/>"#,
            num(px(*t)),
            num(py(*v)),
            if *censored { NON_DETECT } else { DETECT }
        );
    }
    out.push_str("</svg>\n");
    out
}

fn class_color(c: IndicatorClass) -> &'static str {
    use IndicatorClass::*;
    match c {
        StrongUp => "#d7301f",
        Up => "#fc8d59",
        Stable => "#ffffff",
        Down => "#91cf60",
        StrongDown => "#1a9850",
        Above => "#d7301f",
        Below => "#1a9850",
        NonDetect => "#4575b4",
        Insufficient => "#bdbdbd",
    }
}

/// Indicator matrix as a coloured table: wells down, solutes across.
pub fn render_matrix(m: &IndicatorMatrix) -> String {
    let (cw, ch, left, top) = (90.0, 18.0, 90.0, 60.0);
    let width = left + cw * m.cols.len() as f64 + MARGIN;
    let height = top + ch * m.rows.len() as f64 + MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(width),
        h = num(height)
    );
    let _ = writeln!(
        out,
        r#"<text class="title" x="10" y="20" font-family="sans-serif" font-size="14">{} — {}</text>"#,
        esc(&m.mode.to_string()),
        esc(&m.label)
    );
    out.push_str("<g font-family=\"sans-serif\" font-size=\"10\">\n");
    for (c, s) in m.cols.iter().enumerate() {
        let _ = writeln!(out, r#"<text class="col" x="{}" y="{}">{}</text>"#, num(left + cw * c as f64 + 4.0), num(top - 6.0), esc(s));
    }
    for (r, w) in m.rows.iter().enumerate() {
        let y = top + ch * r as f64;
        let _ = writeln!(out, r#"<text class="row" x="10" y="{}">{}</text>"#, num(y + 13.0), esc(w));
        for c in 0..m.cols.len() {
            let cell = &m.cells[r * m.cols.len() + c];
            let x = left + cw * c as f64;
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#888888"><title>{}</title></rect>"##,
                num(x),
                num(y),
                num(cw),
                num(ch),
                class_color(cell.class),
                serde_json::to_value(cell.class).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
            );
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}

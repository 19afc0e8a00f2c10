//! CSV and SVG writers for experiment results.
//!
//! Column orders are fixed:
//!
//! - records: `seed,method,test_intervention,gene,center,radius,covered,feasible,n_cal,delta_true,delta_hat,delta_inject,y`
//! - summary: `method,delta_inject,n_records,coverage,coverage_all,coverage_feasible,mean_width,mean_n_cal,mean_delta_hat,mean_delta_true,feasible_frac,coverage_sd`
//! - bound gap: `method,delta_inject,coverage,mean_delta_true,mean_n,bound,gap`
//!
//! Missing values are empty cells; infinities are written as `inf`.

use std::fmt::Write as _;
use std::io::Write;

use crate::experiments::{EvaluationRecord, GapRow, Method, MethodSummary};

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const RECORD_HEADER: [&str; 13] = [
    "seed",
    "method",
    "test_intervention",
    "gene",
    "center",
    "radius",
    "covered",
    "feasible",
    "n_cal",
    "delta_true",
    "delta_hat",
    "delta_inject",
    "y",
];

pub fn write_records_csv<W: Write>(w: W, records: &[EvaluationRecord]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RECORD_HEADER)?;
    for r in records {
        wr.write_record([
            r.seed.to_string(),
            r.method.to_string(),
            r.test_intervention.to_string(),
            r.gene.to_string(),
            num(r.center),
            num(r.radius),
            u8::from(r.covered).to_string(),
            u8::from(r.feasible).to_string(),
            r.n_cal.to_string(),
            opt(r.delta_true),
            opt(r.delta_hat),
            opt(r.delta_inject),
            num(r.y),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[MethodSummary]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "method",
        "delta_inject",
        "n_records",
        "coverage",
        "coverage_all",
        "coverage_feasible",
        "mean_width",
        "mean_n_cal",
        "mean_delta_hat",
        "mean_delta_true",
        "feasible_frac",
        "coverage_sd",
    ])?;
    for r in rows {
        wr.write_record([
            r.method.to_string(),
            opt(r.delta_inject),
            r.n_records.to_string(),
            num(r.coverage),
            num(r.coverage_all),
            opt(r.coverage_feasible),
            opt(r.mean_width),
            num(r.mean_n_cal),
            opt(r.mean_delta_hat),
            opt(r.mean_delta_true),
            num(r.feasible_frac),
            opt(r.coverage_sd),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_gap_csv<W: Write>(w: W, rows: &[GapRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "delta_inject", "coverage", "mean_delta_true", "mean_n", "bound", "gap"])?;
    for r in rows {
        wr.write_record([
            r.method.to_string(),
            opt(r.delta_inject),
            num(r.coverage),
            num(r.mean_delta_true),
            num(r.mean_n),
            num(r.bound),
            num(r.gap),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal reference line and its legend label.
    pub reference: Option<(f64, String)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

impl LineChart {
    /// Renders a self-contained SVG document.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 160.0, 40.0, 55.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let finite = |v: &f64| v.is_finite();
        let xs: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(finite).collect();
        let mut ys: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(finite).collect();
        if let Some((y, _)) = &self.reference {
            ys.push(*y);
        }
        let bounds = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for t in nice_ticks(x0, x1, 6) {
            let x = sx(t);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, top + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, fmt_tick(t));
        }
        for t in nice_ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, left + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        let lx = left + pw + 15.0;
        let mut ly = top + 10.0;
        if let Some((y, label)) = &self.reference {
            let yy = sy(*y);
            let _ = writeln!(s, r#"<line x1="{left}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="gray" stroke-dasharray="6,4"/>"#, left + pw);
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="gray" stroke-dasharray="6,4"/>"#, lx + 25.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(label));
            ly += 20.0;
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
                for p in &pts {
                    let (cx, cy) = p.split_once(',').expect("formatted pair");
                    let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 25.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.name));
            ly += 20.0;
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Builds one series per method from (δ, value) pairs in method order.
pub fn series_by_method<I>(items: I) -> Vec<Series>
where
    I: IntoIterator<Item = (Method, f64, f64)>,
{
    let mut out: Vec<(Method, Vec<(f64, f64)>)> = Vec::new();
    for (m, x, y) in items {
        match out.iter_mut().find(|(k, _)| *k == m) {
            Some((_, v)) => v.push((x, y)),
            None => out.push((m, vec![(x, y)])),
        }
    }
    out.sort_by_key(|(m, _)| *m);
    out.into_iter()
        .map(|(m, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: m.to_string(), points }
        })
        .collect()
}

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use ki_core::trainer::{ppl_curve, read_metrics};
use ki_core::KiError;

use crate::ReportArgs;

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

type Curve = (String, Vec<(u64, f64)>);

pub fn run(a: ReportArgs) -> Result<()> {
    let mut curves: Vec<Curve> = Vec::new();
    for spec in &a.metrics {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| KiError::Config(format!("--metrics {spec:?}: expected label=path")))?;
        let rows = read_metrics(Path::new(path)).with_context(|| format!("reading {path}"))?;
        curves.push((label.to_string(), ppl_curve(&rows)));
    }
    write(&a.csv, &merged_csv(&curves))?;
    write(&a.svg, &svg(&curves))?;
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| KiError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn merged_csv(curves: &[Curve]) -> String {
    let mut out = String::from("label,step,valid_ppl\n");
    for (label, pts) in curves {
        for (s, p) in pts {
            let _ = writeln!(out, "{label},{s},{p}");
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Validation PPL against step, one polyline per run.
fn svg(curves: &[Curve]) -> String {
    let pts = curves.iter().flat_map(|(_, p)| p.iter());
    let (mut x1, mut y0, mut y1) = (1u64, f64::INFINITY, f64::NEG_INFINITY);
    for &(s, p) in pts {
        x1 = x1.max(s);
        y0 = y0.min(p);
        y1 = y1.max(p);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let pw = W - 2.0 * MARGIN;
    let ph = H - 2.0 * MARGIN;
    let px = |s: u64| MARGIN + pw * s as f64 / x1 as f64;
    let py = |p: f64| MARGIN + ph * (1.0 - (p - y0) / (y1 - y0));

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let s = (x1 as f64 * f).round() as u64;
        let p = y0 + (y1 - y0) * f;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{s}</text>"#,
            px(s),
            H - MARGIN + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{p:.1}</text>"#,
            MARGIN - 6.0,
            py(p) + 4.0
        );
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">validation PPL</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(s, p)| format!("{:.1},{:.1}", px(s), py(p))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let lx = W - MARGIN - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 26.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_long_format() {
        let c = vec![("ki".to_string(), vec![(0, 10.0), (5, 4.5)])];
        assert_eq!(merged_csv(&c), "label,step,valid_ppl\nki,0,10\nki,5,4.5\n");
    }

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let c = vec![
            ("a<b".to_string(), vec![(0, 10.0), (5, 4.0)]),
            ("b".to_string(), vec![(0, 9.0)]),
        ];
        let s = svg(&c);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a&lt;b"));
        assert!(svg(&[]).ends_with("</svg>\n"));
    }
}

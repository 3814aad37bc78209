use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cache::CacheKey;
use super::config::RunConfig;
use crate::corrector::{ConvergenceReport, RateFit, ENERGY_RATE_WINDOW, H1_RATE_WINDOW};
use crate::error::Result;
use crate::geometry::CellMeasures;

pub const CSV_COLUMNS: [&str; 10] = [
    "epsilon",
    "h",
    "err_h1",
    "err_l2",
    "energy_fine",
    "energy_hom",
    "energy_gap",
    "weak_gap",
    "newton_iters",
    "seconds",
];

/// Shortest decimal that parses back to the same `f64` (negative zero prints as `0.0`).
pub fn fmt_f64(x: f64) -> String {
    format!("{:?}", x + 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub h1: (f64, f64),
    pub energy: (f64, f64),
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            h1: H1_RATE_WINDOW,
            energy: ENERGY_RATE_WINDOW,
        }
    }
}

/// Everything a sweep produced, enough to regenerate the CSV and plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: RunConfig,
    pub cache_key: CacheKey,
    pub tensor: [[f64; 2]; 2],
    pub measures: CellMeasures,
    pub hom_n: usize,
    pub report: ConvergenceReport,
    pub windows: Windows,
    pub windows_met: bool,
}

pub fn write_csv<W: Write>(report: &ConvergenceReport, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in &report.records {
        out.write_record([
            fmt_f64(r.epsilon),
            fmt_f64(r.h),
            fmt_f64(r.err_h1),
            fmt_f64(r.err_l2),
            fmt_f64(r.energy_fine),
            fmt_f64(r.energy_hom),
            fmt_f64(r.energy_gap),
            fmt_f64(r.weak_gap),
            r.newton_iters.to_string(),
            r.seconds.map(fmt_f64).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

pub fn csv_string(report: &ConvergenceReport) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(report, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

fn fmt_rate(name: &str, fit: &Option<RateFit>, window: Option<(f64, f64)>) -> String {
    match fit {
        None => format!("{name:<14} undefined"),
        Some(f) => {
            let verdict = match window {
                Some((lo, hi)) if f.within(lo, hi) => format!("  in [{lo}, {hi}]"),
                Some((lo, hi)) => format!("  OUTSIDE [{lo}, {hi}]"),
                None => "  (reported only)".to_string(),
            };
            let excluded = if f.excluded.is_empty() {
                String::new()
            } else {
                format!("  excluding eps {:?}", f.excluded)
            };
            format!(
                "{name:<14} {:.4}  95% CI [{:.4}, {:.4}]  residual {:.3e}{verdict}{excluded}",
                f.rate, f.ci.0, f.ci.1, f.residual
            )
        }
    }
}

/// Human-readable table and rate lines.
pub fn render_summary(s: &SweepSummary) -> String {
    let mut out = String::new();
    let r = &s.report;
    let _ = writeln!(
        out,
        "homogenized mesh: {} x {} (h = {})",
        s.hom_n,
        s.hom_n,
        fmt_f64(r.hom_h)
    );
    let _ = writeln!(
        out,
        "{:>8} {:>11} {:>11} {:>11} {:>11} {:>11} {:>6}",
        "eps", "err_h1", "err_cutoff", "err_l2", "energy_gap", "weak_gap", "newton"
    );
    for rec in &r.records {
        let _ = writeln!(
            out,
            "{:>8} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>6}",
            format!("1/{}", (1.0 / rec.epsilon).round()),
            rec.err_h1,
            rec.err_h1_cutoff,
            rec.err_l2,
            rec.energy_gap,
            rec.weak_gap,
            rec.newton_iters
        );
    }
    let _ = writeln!(
        out,
        "{}",
        fmt_rate("rate h1", &r.rate_h1, Some(s.windows.h1))
    );
    let _ = writeln!(
        out,
        "{}",
        fmt_rate("rate h1 cutoff", &r.rate_h1_cutoff, None)
    );
    let _ = writeln!(
        out,
        "{}",
        fmt_rate("rate energy", &r.rate_energy, Some(s.windows.energy))
    );
    if let Some(note) = &r.rate_note {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "windows {}",
        if s.windows_met { "met" } else { "VIOLATED" }
    );
    out
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
    fit: Option<&'a RateFit>,
}

/// Log-log plot of the error measures against ε with the fitted lines.
pub fn render_svg(report: &ConvergenceReport) -> String {
    let pick = |f: fn(&crate::corrector::ConvergenceRecord) -> f64| -> Vec<(f64, f64)> {
        report
            .records
            .iter()
            .map(|r| (r.epsilon, f(r).abs()))
            .filter(|p| p.1 > 0.0 && p.1.is_finite())
            .collect()
    };
    let series = [
        Series {
            label: "H1 error",
            color: "#1f77b4",
            points: pick(|r| r.err_h1),
            fit: report.rate_h1.as_ref(),
        },
        Series {
            label: "energy gap",
            color: "#d62728",
            points: pick(|r| r.energy_gap),
            fit: report.rate_energy.as_ref(),
        },
        Series {
            label: "weak gap",
            color: "#2ca02c",
            points: pick(|r| r.weak_gap),
            fit: None,
        },
    ];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if all.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">no positive data</text>"#,
            W / 2.0,
            H / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx: Vec<f64> = all.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = all.iter().map(|p| p.1.log10()).collect();
    let (x0, x1) = decade_range(&lx);
    let (y0, y1) = decade_range(&ly);
    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y.log10() - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##,
            H - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#,
            H - BOTTOM + 16.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );

    for (i, s) in series.iter().enumerate() {
        if let Some(f) = s.fit {
            let xs: Vec<f64> = s.points.iter().map(|p| p.0).collect();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let line = |e: f64| (f.intercept + f.rate * e.ln()).exp();
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-dasharray="5,4"/>"#,
                px(lo),
                py(line(lo)),
                px(hi),
                py(line(hi)),
                s.color
            );
        }
        if s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(e, v)| format!("{:.2},{:.2}", px(e), py(v)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}"/>"#,
                path.join(" "),
                s.color
            );
        }
        for &(e, v) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                px(e),
                py(v),
                s.color
            );
        }
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let label = match s.fit {
            Some(f) => format!("{} (rate {:.2})", s.label, f.rate),
            None => s.label.to_string(),
        };
        let _ = writeln!(
            svg,
            r#"<circle cx="{lx}" cy="{}" r="4" fill="{}"/>"#,
            ly - 4.0,
            s.color
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{label}</text>"#, lx + 8.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn decade_range(logs: &[f64]) -> (f64, f64) {
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = logs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::ConvergenceRecord;

    fn record(eps: f64, err: f64, seconds: Option<f64>) -> ConvergenceRecord {
        ConvergenceRecord {
            epsilon: eps,
            h: eps / 16.0,
            err_h1: err,
            err_h1_cutoff: 2.0 * err,
            err_h1_elementwise: err,
            err_l2: 0.1 * err,
            energy_fine: 1.0 + err,
            energy_hom: 1.0,
            energy_gap: -err * err,
            weak_gap: 0.01 * eps,
            newton_iters: 2,
            newton_trace: vec![1.0, 1e-6, 1e-13],
            norm_h1: 0.2,
            seconds,
        }
    }

    fn report(seconds: Option<f64>) -> ConvergenceReport {
        let recs = [2, 4, 8]
            .iter()
            .map(|&n| record(1.0 / n as f64, 0.3 / (n as f64).sqrt(), seconds))
            .collect();
        ConvergenceReport::from_records(recs, 1.0 / 64.0, 3)
    }

    #[test]
    fn csv_layout() {
        let text = csv_string(&report(None)).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "");
        assert!(!text.contains('\r'));
        assert!(lines[1].starts_with("0.5,0.03125,"));
        assert!(lines[1].ends_with(",2,"));
        for line in &lines[1..4] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 10);
            for f in &fields[..8] {
                let v: f64 = f.parse().unwrap();
                assert_eq!(fmt_f64(v), *f);
            }
        }
        let timed = csv_string(&report(Some(1.25))).unwrap();
        assert!(timed.lines().nth(1).unwrap().ends_with(",2,1.25"));
    }

    #[test]
    fn floats_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            1e-300,
            -2.5e17,
            6.02214076e23,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn svg_is_deterministic_and_complete() {
        let r = report(None);
        let a = render_svg(&r);
        assert_eq!(a, render_svg(&r));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3 * 3 + 3);
        assert!(a.contains("stroke-dasharray"));
        let empty = ConvergenceReport::from_records(vec![record(0.5, 0.0, None)], 0.1, 1);
        // Only the weak gap is positive: one data point plus three legend markers.
        assert_eq!(render_svg(&empty).matches("<circle").count(), 4);
        let mut zero = record(0.5, 0.0, None);
        zero.weak_gap = 0.0;
        let zero = ConvergenceReport::from_records(vec![zero], 0.1, 1);
        assert!(render_svg(&zero).contains("no positive data"));
    }
}

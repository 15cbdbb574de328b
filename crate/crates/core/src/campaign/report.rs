use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{median, replay, RunRecord, RunStatus};
use crate::error::Result;
use crate::field::ScalarField2D;
use crate::io;
use crate::recon::fmt_float;

/// A named polyline for [`svg_line_chart`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal standalone SVG line chart with axes, tick labels and a legend.
pub fn svg_line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 70.0, 150.0, 40.0, 50.0);
    let finite = |v: &f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(finite).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(finite).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (false, _) => (0.0, 1.0),
            (true, false) => (lo - 0.5, lo + 0.5),
            (true, true) => (lo, hi),
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{ml},{mt} V{} H{}" fill="none" stroke="black"/>"#,
        mt + ph,
        ml + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            mt + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 10.0, esc(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        esc(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        let ly = mt + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            ml + pw + 10.0,
            ml + pw + 30.0,
            ml + pw + 36.0,
            ly + 4.0,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grey image of `field` with sampled pixels drawn white and the rest
/// scaled into 0..=200.
fn overlay_pgm(field: &ScalarField2D, sampled: &ScalarField2D) -> Vec<u8> {
    let (lo, hi) = (field.min(), field.max());
    let mut out = format!("P5\n{} {}\n255\n", field.width, field.height).into_bytes();
    for (v, s) in field.values.iter().zip(&sampled.values) {
        let g = if *s > 0.0 {
            255
        } else if hi > lo {
            ((v - lo) / (hi - lo) * 200.0).round() as u8
        } else {
            0
        };
        out.push(g);
    }
    out
}

fn ledger_chart(rec: &RunRecord) -> Option<String> {
    if rec.ledger.entries().is_empty() {
        return None;
    }
    let mut s = String::from(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="520" height="260" font-family="sans-serif" font-size="12">
<rect width="520" height="260" fill="white"/>
<text x="260" y="22" text-anchor="middle" font-size="15">simulated time by ledger kind</text>
"#,
    );
    let totals = rec.ledger.totals();
    let max = totals.iter().map(|t| t.1).fold(0.0, f64::max).max(1e-12);
    for (i, (kind, t)) in totals.iter().enumerate() {
        let y = 40.0 + 34.0 * i as f64;
        let len = 300.0 * t / max;
        let _ = writeln!(
            s,
            r#"<text x="90" y="{}" text-anchor="end">{}</text><rect x="100" y="{y}" width="{len:.1}" height="22" fill="{}"/><text x="{:.1}" y="{}">{} s</text>"#,
            y + 15.0,
            kind.name(),
            COLORS[i % COLORS.len()],
            106.0 + len,
            y + 15.0,
            tick(*t)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Verifies and loads the run in `run_dir`, then writes CSV summaries and
/// SVG/PGM figures to `<run_dir>/report`. Returns the written paths.
pub fn report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let rec = replay(run_dir)?;
    let out = run_dir.join("report");
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = out.join(name);
        io::write_bytes(&p, bytes)?;
        written.push(p);
        Ok(())
    };

    let mut summary = String::from("key,value\n");
    let status = match &rec.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Failed { message } => format!("failed: {}", message.replace(',', ";")),
    };
    let _ = writeln!(summary, "status,{status}");
    let _ = writeln!(summary, "n_observations,{}", rec.observations.len());
    let _ = writeln!(summary, "n_decisions,{}", rec.decisions.len());
    let _ = writeln!(summary, "clock_s,{}", rec.ledger.clock());
    for (kind, t) in rec.ledger.totals() {
        let _ = writeln!(summary, "ledger_{}_s,{t}", kind.name());
    }
    if let Some(f) = rec.ledger.decision_fraction() {
        let _ = writeln!(summary, "decision_fraction,{f}");
    }
    for (k, v) in &rec.summary {
        let _ = writeln!(summary, "{k},{}", fmt_float(*v));
    }
    put("summary.csv", summary.as_bytes())?;

    if !rec.reports.is_empty() {
        let mut csv = String::from("n_obs,rmse,psnr\n");
        let mut pts = Vec::new();
        for r in &rec.reports {
            let _ = writeln!(csv, "{},{},{}", r.report.n_obs, r.report.rmse, fmt_float(r.report.psnr));
            pts.push((r.report.n_obs as f64, r.report.rmse));
        }
        put("rmse_vs_budget.csv", csv.as_bytes())?;
        let chart = svg_line_chart(
            "reconstruction error vs measurements",
            "measurements",
            "rmse",
            &[Series { name: "adaptive".into(), points: pts }],
        );
        put("rmse_vs_budget.svg", chart.as_bytes())?;
    }

    if !rec.bench.is_empty() {
        let mut by_arm: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for b in &rec.bench {
            by_arm.entry(b.arm.name()).or_default().push(b.report.rmse);
        }
        let mut csv = String::from("arm,n,median_rmse,min_rmse,max_rmse\n");
        for (arm, v) in &by_arm {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(csv, "{arm},{},{},{lo},{hi}", v.len(), median(v.clone()));
        }
        put("bench_summary.csv", csv.as_bytes())?;
    }

    if !rec.episodes.is_empty() {
        let pts = rec.episodes.iter().map(|e| (e.episode as f64, e.return_disc)).collect();
        let smooth = moving_average(&rec.episodes.iter().map(|e| e.return_disc).collect::<Vec<_>>(), 50);
        let chart = svg_line_chart(
            "double Q-learning",
            "episode",
            "discounted return",
            &[
                Series { name: "return".into(), points: pts },
                Series {
                    name: "moving mean".into(),
                    points: smooth.into_iter().enumerate().map(|(i, v)| (i as f64, v)).collect(),
                },
            ],
        );
        put("learning_curve.svg", chart.as_bytes())?;
    }
    if !rec.batches.is_empty() {
        let pts = rec.batches.iter().map(|b| (b.batch as f64, b.mean_return)).collect();
        let chart = svg_line_chart(
            "policy gradient",
            "batch",
            "mean discounted return",
            &[Series { name: "mean return".into(), points: pts }],
        );
        put("policy_curve.svg", chart.as_bytes())?;
    }
    if let Some(chart) = ledger_chart(&rec) {
        put("ledger.svg", chart.as_bytes())?;
    }
    if let Some(sampled) = rec.fields.get("sampled") {
        for base in ["truth", "recon"] {
            if let Some(f) = rec.fields.get(base) {
                put(&format!("overlay_{base}.pgm"), &overlay_pgm(f, sampled))?;
            }
        }
    }
    Ok(written)
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += v[i];
        if i >= window {
            acc -= v[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

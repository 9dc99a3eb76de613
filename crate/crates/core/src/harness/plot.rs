use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::experiment::{Aggregate, ExperimentReport};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Aggregates that can be drawn on log axes.
fn plottable(report: &ExperimentReport) -> Vec<&Aggregate> {
    report
        .aggregates
        .iter()
        .filter(|a| a.median_distance.is_finite() && a.median_distance > 0.0)
        .collect()
}

/// Least-squares slope of `log median distance` against `log n`.
pub fn loglog_slope(report: &ExperimentReport) -> Option<f64> {
    let points: Vec<(f64, f64)> = plottable(report)
        .iter()
        .map(|a| ((a.n as f64).ln(), a.median_distance.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// SVG of median distance against `n` on log-log axes, with the band
/// between the first and ninth deciles. A pure function of the report.
pub fn render_svg(report: &ExperimentReport) -> Result<String> {
    let points = plottable(report);
    if points.len() < 2 {
        return Err(Error::argument("plot needs at least two sample sizes with a positive median distance"));
    }
    let log_x: Vec<f64> = points.iter().map(|a| (a.n as f64).log10()).collect();
    let positive = |v: f64| if v.is_finite() && v > 0.0 { Some(v) } else { None };
    let lows: Vec<f64> = points
        .iter()
        .map(|a| positive(a.decile_low).unwrap_or(a.median_distance).log10())
        .collect();
    let highs: Vec<f64> = points
        .iter()
        .map(|a| positive(a.decile_high).unwrap_or(a.median_distance).log10())
        .collect();
    let medians: Vec<f64> = points.iter().map(|a| a.median_distance.log10()).collect();

    let (x_lo, x_hi) = (log_x[0].floor(), log_x[log_x.len() - 1].ceil());
    let y_lo = lows.iter().chain(&medians).copied().fold(f64::INFINITY, f64::min).floor();
    let y_hi = highs.iter().chain(&medians).copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    let y_hi = if y_hi <= y_lo { y_lo + 1.0 } else { y_hi };
    let x_hi = if x_hi <= x_lo { x_lo + 1.0 } else { x_hi };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |v: f64| MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = format!("{} / {}: median distance to truth", report.config.model_id, report.config.contrast_id);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="24" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&title));

    // axes with decade ticks
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for d in (x_lo as i32)..=(x_hi as i32) {
        let x = sx(d as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0,
            MARGIN_TOP + plot_h + 20.0
        );
    }
    for d in (y_lo as i32)..=(y_hi as i32) {
        let y = sy(d as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">distance</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // decile band
    let mut band: Vec<String> = log_x.iter().zip(&highs).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    band.extend(log_x.iter().zip(&lows).rev().map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))));
    let _ = writeln!(
        svg,
        r##"<polygon class="band" points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
        band.join(" ")
    );
    let line: Vec<String> = log_x.iter().zip(&medians).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        svg,
        r##"<polyline class="median" points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        line.join(" ")
    );
    for (&x, &y) in log_x.iter().zip(&medians) {
        let _ = writeln!(
            svg,
            r##"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="#08519c"/>"##,
            sx(x),
            sy(y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes [`render_svg`] to `path`.
pub fn emit_plot(report: &ExperimentReport, path: &Path) -> Result<()> {
    let svg = render_svg(report)?;
    fs::write(path, svg)?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn report(points: &[(usize, f64)]) -> ExperimentReport {
        ExperimentReport {
            config: ExperimentConfig::for_model("gaussian_location").unwrap(),
            records: Vec::new(),
            aggregates: points
                .iter()
                .map(|&(n, m)| Aggregate {
                    n,
                    median_distance: m,
                    decile_low: m / 2.0,
                    decile_high: m * 2.0,
                    median_certified_gap: 0.0,
                    succeeded: 1,
                    failed: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn two_points_give_two_markers() {
        let svg = render_svg(&report(&[(100, 0.1), (10_000, 0.01)])).unwrap();
        assert_eq!(svg.matches("class=\"marker\"").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg, render_svg(&report(&[(100, 0.1), (10_000, 0.01)])).unwrap());
    }

    #[test]
    fn needs_two_sizes() {
        assert!(render_svg(&report(&[(100, 0.1)])).is_err());
        assert!(render_svg(&report(&[(100, 0.1), (1000, 0.0)])).is_err());
    }

    #[test]
    fn slope_of_root_n_rate() {
        let r = report(&[(100, 0.1), (10_000, 0.01)]);
        assert!((loglog_slope(&r).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = report(&[(100, 0.1), (1000, 0.03)]);
        let err = emit_plot(&r, Path::new("/nonexistent-dir/plot.svg")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}

//! Score-vs-SNR curve rendering (standalone SVG, no plotting dependency)
//! and aggregation of sweep cells into plottable series.
//!
//! Output is deterministic: identical input produces byte-identical SVG.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::eval::EvalResult;
use crate::harness::{CellKey, SweepResult};
use crate::stats::Metric;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("need at least one series with two or more points")]
    EmptySeries,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One point of a degradation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub snr_db: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// One labelled curve; points sorted ascending by SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<PlotPoint>,
}

impl PlotSeries {
    pub fn new(label: impl Into<String>, mut points: Vec<PlotPoint>) -> Self {
        points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        PlotSeries {
            label: label.into(),
            points,
        }
    }
}

/// One series per system: mean metric across recordings per SNR level,
/// with the standard error of that mean.
pub fn series_for_metric(sweep: &SweepResult, metric: Metric) -> Vec<PlotSeries> {
    series_from_cell_pairs(sweep.cells(), metric)
}

/// Same as [`series_for_metric`] but over raw (key, eval) pairs, e.g. from
/// the tidy CSV.
pub fn series_from_cell_pairs<'a>(
    cells: impl Iterator<Item = (&'a CellKey, &'a EvalResult)>,
    metric: Metric,
) -> Vec<PlotSeries> {
    let mut grouped: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for (key, eval) in cells {
        let snr = if key.snr_db == 0.0 { 0.0 } else { key.snr_db };
        let slot = grouped
            .entry(key.system_id.clone())
            .or_default()
            .entry(ordered_bits(snr))
            .or_insert((snr, Vec::new()));
        slot.1.push(metric.of(eval));
    }
    grouped
        .into_iter()
        .map(|(label, by_snr)| {
            let points = by_snr
                .into_values()
                .map(|(snr, values)| {
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let stderr = if values.len() > 1 {
                        let var =
                            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                        (var / n).sqrt()
                    } else {
                        0.0
                    };
                    PlotPoint {
                        snr_db: snr,
                        mean,
                        stderr,
                    }
                })
                .collect();
            PlotSeries::new(label, points)
        })
        .collect()
}

/// f64 bits remapped so that unsigned ordering equals numeric ordering.
fn ordered_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 0 {
        bits | (1 << 63)
    } else {
        !bits
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Render score-vs-SNR curves with stderr whiskers to an SVG string.
pub fn snr_curves_svg(series: &[PlotSeries]) -> Result<String, ReportError> {
    if !series.iter().any(|s| s.points.len() >= 2) {
        return Err(ReportError::EmptySeries);
    }
    for s in series {
        for p in &s.points {
            if !(0.0..=1.0).contains(&p.mean) {
                return Err(ReportError::ScoreOutOfRange(p.mean));
            }
        }
    }

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.snr_db))
        .collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |snr: f64| MARGIN_LEFT + (snr - x_min) / x_span * plot_w;
    let y_of = |score: f64| MARGIN_TOP + (1.0 - score) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h
    ));

    // X ticks: every distinct SNR when few enough, else ~10 even steps.
    let mut distinct: Vec<f64> = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let ticks: Vec<f64> = if distinct.len() <= 20 {
        distinct
    } else {
        (0..=10)
            .map(|i| x_min + x_span * f64::from(i) / 10.0)
            .collect()
    };
    for &tick in &ticks {
        let x = x_of(tick);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" class=\"x-tick\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            crate::augment::format_snr_level(tick)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">SNR (dB)</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));

    // Y ticks at 0.0, 0.2, ... 1.0.
    for i in 0..=5 {
        let v = f64::from(i) * 0.2;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            MARGIN_LEFT - 9.0,
            y + 4.0
        ));
    }

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x_of(p.snr_db), y_of(p.mean)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        for p in &s.points {
            let x = x_of(p.snr_db);
            let y_lo = y_of((p.mean - p.stderr).max(0.0));
            let y_hi = y_of((p.mean + p.stderr).min(1.0));
            svg.push_str(&format!(
                "<g class=\"whisker\" stroke=\"{color}\">\
                 <line x1=\"{x:.2}\" y1=\"{y_hi:.2}\" x2=\"{x:.2}\" y2=\"{y_lo:.2}\"/>\
                 <line x1=\"{:.2}\" y1=\"{y_hi:.2}\" x2=\"{:.2}\" y2=\"{y_hi:.2}\"/>\
                 <line x1=\"{:.2}\" y1=\"{y_lo:.2}\" x2=\"{:.2}\" y2=\"{y_lo:.2}\"/>\
                 <circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>\
                 </g>\n",
                x - 3.0,
                x + 3.0,
                x - 3.0,
                x + 3.0,
                y_of(p.mean)
            ));
        }
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * idx as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ly + 4.0,
            lx + 18.0,
            ly + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>\n",
            lx + 24.0,
            ly + 8.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render curves to a file.
pub fn render_snr_curves(series: &[PlotSeries], out: impl AsRef<Path>) -> Result<(), ReportError> {
    let out = out.as_ref();
    let svg = snr_curves_svg(series)?;
    std::fs::write(out, svg).map_err(|source| ReportError::Io {
        path: out.display().to_string(),
        source,
    })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Per-system mean/stderr summary as CSV (system_id, metric, snr_db, mean,
/// stderr, n).
pub fn summary_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("system_id,metric,snr_db,mean,stderr,n\n");
    for metric in Metric::ALL {
        for series in series_for_metric(sweep, metric) {
            for p in &series.points {
                let n = sweep
                    .cells()
                    .filter(|(k, _)| {
                        k.system_id == series.label && (k.snr_db - p.snr_db).abs() < 1e-9
                    })
                    .count();
                out.push_str(&format!(
                    "{},{},{},{},{},{n}\n",
                    series.label,
                    metric.label(),
                    p.snr_db,
                    p.mean,
                    p.stderr
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, f64, f64)]) -> PlotSeries {
        PlotSeries::new(
            "test",
            points
                .iter()
                .map(|&(snr_db, mean, stderr)| PlotPoint {
                    snr_db,
                    mean,
                    stderr,
                })
                .collect(),
        )
    }

    #[test]
    fn two_points_one_polyline_two_whiskers() {
        let svg = snr_curves_svg(&[series(&[(0.0, 0.5, 0.02), (3.0, 0.7, 0.01)])]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("class=\"whisker\"").count(), 2);
    }

    #[test]
    fn identical_input_gives_identical_bytes() {
        let s = [series(&[(0.0, 0.5, 0.02), (3.0, 0.7, 0.01)])];
        assert_eq!(snr_curves_svg(&s).unwrap(), snr_curves_svg(&s).unwrap());
    }

    #[test]
    fn default_grid_ticks_include_extremes() {
        let pts: Vec<(f64, f64, f64)> = crate::augment::SnrGrid::sweep_default()
            .levels()
            .into_iter()
            .map(|snr| (snr, 0.5 + snr / 200.0, 0.01))
            .collect();
        let svg = snr_curves_svg(&[series(&pts)]).unwrap();
        assert!(svg.contains(">-6</text>"), "missing -6 tick");
        assert!(svg.contains(">45</text>"), "missing 45 tick");
    }

    #[test]
    fn empty_and_single_point_series_are_rejected() {
        assert!(matches!(snr_curves_svg(&[]), Err(ReportError::EmptySeries)));
        assert!(matches!(
            snr_curves_svg(&[series(&[(0.0, 0.5, 0.0)])]),
            Err(ReportError::EmptySeries)
        ));
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        assert!(matches!(
            snr_curves_svg(&[series(&[(0.0, 1.5, 0.0), (3.0, 0.5, 0.0)])]),
            Err(ReportError::ScoreOutOfRange(_))
        ));
    }

    #[test]
    fn points_sort_by_snr() {
        let s = series(&[(3.0, 0.7, 0.0), (0.0, 0.5, 0.0)]);
        assert!(s.points[0].snr_db < s.points[1].snr_db);
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::Path;

use crate::benchmark::{pareto_frontier, ResultTable};
use crate::error::{Error, Result};

/// One configuration's mean scores on the two plotted metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub baseline: bool,
}

/// Per-configuration means of `x_metric` and `y_metric`. Points are labeled
/// by their swept values, baselines by pipeline name.
pub fn tradeoff_points(table: &ResultTable, x_metric: &str, y_metric: &str) -> Result<Vec<PlotPoint>> {
    let present = table.metrics();
    for m in [x_metric, y_metric] {
        if !present.contains(m) {
            return Err(Error::Plot(format!(
                "metric `{m}` is not in the results (have: {})",
                present.iter().copied().collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(table
        .aggregates()
        .into_iter()
        .filter_map(|agg| {
            let x = agg.metrics.get(x_metric)?.mean;
            let y = agg.metrics.get(y_metric)?.mean;
            let baseline = table.metadata.baseline_pipelines.contains(&agg.pipeline);
            let label = if agg.params.is_empty() {
                agg.pipeline.clone()
            } else {
                agg.params
                    .iter()
                    .map(|(k, v)| {
                        let short = k.rsplit('.').next().unwrap_or(k);
                        match v {
                            serde_json::Value::String(s) => format!("{short}={s}"),
                            other => format!("{short}={other}"),
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            Some(PlotPoint { label, x, y, baseline })
        })
        .collect())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5f64.max(0.1 * lo.abs()) };
    (lo - pad, hi + pad)
}

/// Scatter of configurations with baselines drawn as black crosses and the
/// Pareto frontier (maximizing both axes) as a grey line.
pub fn render_tradeoff_svg(points: &[PlotPoint], x_metric: &str, y_metric: &str) -> String {
    let (x0, x1) = span(points.iter().map(|p| p.x));
    let (y0, y1) = span(points.iter().map(|p| p.y));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<g id="axes" stroke="black"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/></g>"#
    );
    let _ = writeln!(s, r#"<g id="ticks">"#);
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{bottom}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            bottom + 4.0,
            bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{left}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            left - 4.0,
            left - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text id="x-label" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(x_metric)
    );
    let _ = writeln!(
        s,
        r#"<text id="y-label" x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_metric)
    );

    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let frontier = pareto_frontier(&coords);
    let path: Vec<String> = frontier
        .iter()
        .map(|&i| format!("{:.2},{:.2}", px(points[i].x), py(points[i].y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline id="frontier" points="{}" fill="none" stroke="#999999" stroke-width="2"/>"##,
        path.join(" ")
    );

    let _ = writeln!(s, r#"<g id="points">"#);
    for p in points {
        let (cx, cy) = (px(p.x), py(p.y));
        if p.baseline {
            let d = 6.0;
            let _ = writeln!(
                s,
                r#"<g class="baseline" stroke="black" stroke-width="2.5"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
                cx - d,
                cy - d,
                cx + d,
                cy + d,
                cx - d,
                cy + d,
                cx + d,
                cy - d
            );
        } else {
            let _ = writeln!(
                s,
                r##"<circle class="config" cx="{cx:.2}" cy="{cy:.2}" r="4.5" fill="#3b6ea8"/>"##
            );
        }
        let _ = writeln!(
            s,
            r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
            cx + 8.0,
            cy - 8.0,
            escape(&p.label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Renders the tradeoff plot of `table` into `path`.
pub fn write_tradeoff_svg(table: &ResultTable, x_metric: &str, y_metric: &str, path: &Path) -> Result<()> {
    let points = tradeoff_points(table, x_metric, y_metric)?;
    std::fs::write(path, render_tradeoff_svg(&points, x_metric, y_metric)).map_err(|e| Error::io(path, e))
}

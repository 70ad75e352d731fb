//! SVG charts and tab-separated report tables.
//!
//! Output uses only `line`, `circle`, `rect`, `text` and `polyline`
//! elements. Numbers are written with fixed precision and a `.` decimal
//! point, so identical inputs produce byte-identical documents on every
//! platform.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::charts::{ChartKind, ChartSeries, Limits};
use crate::error::{Error, Result};
use crate::simulate::{ChartOutcome, ComparisonReport, SpikeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub show_alpha_line: bool,
    /// Label flagged points with their index.
    pub annotate_flags: bool,
    pub title: String,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width: 800,
            height: 400,
            show_alpha_line: true,
            annotate_flags: false,
            title: String::new(),
        }
    }
}

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 40.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y_top: f64,
    y_bottom: f64,
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        if self.n <= 1 {
            (self.x0 + self.x1) / 2.0
        } else {
            self.x0 + (self.x1 - self.x0) * i as f64 / (self.n - 1) as f64
        }
    }

    fn y(&self, v: f64) -> f64 {
        self.y_bottom - (self.y_bottom - self.y_top) * (v - self.lo) / (self.hi - self.lo)
    }
}

/// Horizontal reference lines: (css class, value).
fn reference_lines(series: &ChartSeries, spec: &RenderSpec) -> Vec<(&'static str, f64)> {
    match series.limits {
        Limits::Shewhart(l) => vec![("limit", l.ucl), ("center", l.center), ("limit", l.lcl)],
        Limits::Threshold { q } if series.kind == ChartKind::ConformalScore => vec![("limit", q)],
        Limits::PValue { level } if spec.show_alpha_line => vec![("alpha-line", level)],
        _ => Vec::new(),
    }
}

fn y_range(series: &ChartSeries, lines: &[(&str, f64)]) -> (f64, f64) {
    if series.kind == ChartKind::PValue {
        return (0.0, 1.0);
    }
    let values = series
        .points
        .iter()
        .flat_map(|p| [Some(p.value), p.lower, p.upper])
        .flatten()
        .chain(lines.iter().map(|(_, v)| *v));
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        0.5 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

fn fmt_points(coords: impl Iterator<Item = (f64, f64)>) -> String {
    coords
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a chart series as an SVG document.
pub fn render_chart(series: &ChartSeries, spec: &RenderSpec) -> Result<String> {
    if series.points.is_empty() {
        return Err(Error::NothingToRender);
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidParameter(
            "render dimensions must be positive".into(),
        ));
    }
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let lines = reference_lines(series, spec);
    let (lo, hi) = y_range(series, &lines);
    let frame = Frame {
        x0: MARGIN_LEFT,
        x1: (w - MARGIN_RIGHT).max(MARGIN_LEFT + 1.0),
        y_top: MARGIN_TOP,
        y_bottom: (h - MARGIN_BOTTOM).max(MARGIN_TOP + 1.0),
        n: series.points.len(),
        lo,
        hi,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(
        svg,
        r##"<rect class="background" x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        spec.width, spec.height
    );
    let title = if spec.title.is_empty() {
        series.kind.as_str().to_string()
    } else {
        spec.title.clone()
    };
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14">{}</text>"#,
        frame.x0,
        MARGIN_TOP / 2.0,
        escape(&title)
    );

    // axes
    let _ = writeln!(
        svg,
        r##"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>"##,
        frame.x0, frame.y_top, frame.x0, frame.y_bottom
    );
    let _ = writeln!(
        svg,
        r##"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>"##,
        frame.x0, frame.y_bottom, frame.x1, frame.y_bottom
    );
    for v in [lo, hi] {
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{:.4}</text>"#,
            frame.x0 - 4.0,
            frame.y(v) + 3.0,
            v
        );
    }

    // interval band
    let has_band = series
        .points
        .iter()
        .all(|p| p.lower.is_some() && p.upper.is_some());
    if has_band
        && matches!(
            series.kind,
            ChartKind::ConformalInterval | ChartKind::UncertaintySpike
        )
    {
        let upper = series
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (frame.x(i), frame.y(p.upper.unwrap_or(p.value))));
        let lower = series
            .points
            .iter()
            .enumerate()
            .rev()
            .map(|(i, p)| (frame.x(i), frame.y(p.lower.unwrap_or(p.value))));
        let mut ring: Vec<(f64, f64)> = upper.chain(lower).collect();
        ring.push(ring[0]);
        let _ = writeln!(
            svg,
            r##"<polyline class="band" points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
            fmt_points(ring.into_iter())
        );
    }

    for (class, v) in &lines {
        let color = match *class {
            "center" => "#2ca02c",
            _ => "#d62728",
        };
        let _ = writeln!(
            svg,
            r#"<line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 3"/>"#,
            frame.x0,
            frame.y(*v),
            frame.x1,
            frame.y(*v)
        );
    }

    let _ = writeln!(
        svg,
        r##"<polyline class="series" points="{}" fill="none" stroke="#1f77b4"/>"##,
        fmt_points(
            series
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| (frame.x(i), frame.y(p.value)))
        )
    );

    for (i, p) in series.points.iter().enumerate() {
        let (cx, cy) = (frame.x(i), frame.y(p.value));
        if p.signal.is_none() {
            let _ = writeln!(
                svg,
                r##"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="2" fill="#1f77b4"/>"##
            );
            continue;
        }
        let (class, color) = match (p.signal.limit_exceeded, p.signal.uncertainty_spike) {
            (true, true) => ("flag limit spike", "#9467bd"),
            (false, true) => ("flag spike", "#ff7f0e"),
            _ => ("flag limit", "#d62728"),
        };
        let _ = writeln!(
            svg,
            r#"<circle class="{class}" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{color}"/>"#
        );
        if spec.annotate_flags {
            let _ = writeln!(
                svg,
                r#"<text class="flag-label" x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="9">{}</text>"#,
                cx + 5.0,
                cy - 5.0,
                p.index
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Formats with six significant digits and a fixed `.` decimal point.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.999995 -> 10.00000)
    let digits = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|c| *c == '0')
        .count();
    if digits > 6 && decimals > 0 {
        format!("{:.*}", decimals - 1, x)
    } else {
        s
    }
}

pub const REPORT_HEADER: &str =
    "chart\tpre_shift_alarm_rate\tpost_shift_detection_rate\tfirst_detection_index";

fn report_row(out: &mut String, chart: &str, o: &ChartOutcome) {
    let first = o
        .first_detection_index
        .map(|i| i.to_string())
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "{chart}\t{}\t{}\t{first}",
        format_sig6(o.pre_shift_alarm_rate()),
        format_sig6(o.post_shift_detection_rate())
    );
}

/// Tab-separated table with one `shewhart` and one `conformal` row per
/// repetition, in repetition order.
pub fn render_report(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for rep in &report.repetitions {
        report_row(&mut out, "shewhart", &rep.shewhart);
        report_row(&mut out, "conformal", &rep.conformal);
    }
    out
}

/// Tab-separated first-signal indices of the uncertainty-spike scenario.
pub fn render_spike_report(report: &SpikeReport) -> String {
    let mut out = String::from("repetition\tfirst_spike_index\tfirst_limit_index\n");
    let opt = |v: Option<usize>| v.map(|i| i.to_string()).unwrap_or_default();
    for r in &report.repetitions {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            r.repetition,
            opt(r.first_spike_index),
            opt(r.first_limit_index)
        );
    }
    out
}

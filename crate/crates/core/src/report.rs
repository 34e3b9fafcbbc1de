//! Tables and SVG line charts from aggregated statistics.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::ActivationKind;
use crate::perturb::ProbeFamily;
use crate::stats::StatRow;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("table for {expected} got a {found} row")]
    MixedFamilies { expected: ProbeFamily, found: ProbeFamily },
    #[error("chart has no series")]
    EmptySeries,
    #[error("chart has no x values")]
    EmptyGrid,
    #[error("series {series} has {len} points, grid has {expected}")]
    LengthMismatch { series: String, len: usize, expected: usize },
    #[error("series {series}: band does not contain the mean at point {index}")]
    InvalidBand { series: String, index: usize },
    #[error("series {series}: non-finite value at point {index}")]
    NonFinite { series: String, index: usize },
}

/// Column order of the tables.
const TABLE_ACTIVATIONS: [ActivationKind; 2] = [ActivationKind::Abs, ActivationKind::Relu];

pub fn format_percent(p: f64, signed: bool) -> String {
    let pct = p * 100.0;
    let rounded = pct.round();
    let body = if (pct - rounded).abs() < 1e-9 {
        format!("{}", rounded.abs() as i64)
    } else {
        let s = format!("{:.4}", pct.abs());
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    };
    let sign = match () {
        _ if body == "0" => "",
        _ if pct < 0.0 => "-",
        _ if signed => "+",
        _ => "",
    };
    format!("{sign}{body}%")
}

pub fn format_accuracy(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        crate::stats::format_float(v)
    }
}

pub fn format_t(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.1}")
    } else {
        crate::stats::format_float(v)
    }
}

/// Scientific notation with one mantissa decimal and a signed two-digit
/// exponent: `9.0e-13`, `1.0e+00`.
pub fn format_p(v: f64) -> String {
    if !v.is_finite() {
        return crate::stats::format_float(v);
    }
    let s = format!("{v:.1e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub csv: String,
    pub text: String,
}

/// One row per percent (ascending) with accuracy, t and p columns for Abs
/// then ReLU. Cells are empty where an activation has no row.
pub fn emit_table(rows: &[StatRow], family: ProbeFamily) -> Result<Table, ReportError> {
    if let Some(r) = rows.iter().find(|r| r.family != family) {
        return Err(ReportError::MixedFamilies { expected: family, found: r.family });
    }
    let mut percents: Vec<f64> = rows.iter().map(|r| r.percent).collect();
    percents.sort_by(f64::total_cmp);
    percents.dedup();

    let mut header = vec!["percent".to_string()];
    let mut text_header = vec!["Percent".to_string()];
    for a in TABLE_ACTIVATIONS {
        for (col, title) in [("acc", "Acc (%)"), ("t", "T-stat"), ("p", "P-value")] {
            header.push(format!("{}_{col}", a.as_str()));
            text_header.push(format!("{} {title}", a.label()));
        }
    }

    let signed = family == ProbeFamily::Offset;
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(percents.len());
    for &p in &percents {
        let mut line = vec![format_percent(p, signed)];
        for a in TABLE_ACTIVATIONS {
            match rows.iter().find(|r| r.activation == a && r.percent == p) {
                Some(r) => {
                    line.push(format_accuracy(r.mean_acc));
                    line.push(format_t(r.t_stat));
                    line.push(format_p(r.p_value));
                }
                None => line.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        cells.push(line);
    }

    let mut csv = header.join(",");
    csv.push('\n');
    for line in &cells {
        csv.push_str(&line.join(","));
        csv.push('\n');
    }

    let widths: Vec<usize> = (0..text_header.len())
        .map(|c| cells.iter().map(|l| l[c].len()).chain([text_header[c].len()]).max().unwrap_or(0))
        .collect();
    let render = |line: &[String]| {
        let parts: Vec<String> = line.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = render(&text_header);
    text.push_str(&render(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    for line in &cells {
        text.push_str(&render(line));
    }
    Ok(Table { csv, text })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Shared x grid, in percent.
    pub x: Vec<f64>,
    pub series: Vec<Series>,
    pub width: u32,
    pub height: u32,
}

impl ChartSpec {
    /// Mean accuracy with its 95% band per activation, over the percents of
    /// `family`. Activations without rows are left out.
    pub fn from_stats(rows: &[StatRow], family: ProbeFamily, title: &str) -> Result<Self, ReportError> {
        if let Some(r) = rows.iter().find(|r| r.family != family) {
            return Err(ReportError::MixedFamilies { expected: family, found: r.family });
        }
        let mut grid: Vec<f64> = rows.iter().map(|r| r.percent).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut series = Vec::new();
        for a in TABLE_ACTIVATIONS {
            let mine: Vec<&StatRow> = rows.iter().filter(|r| r.activation == a).collect();
            if mine.is_empty() {
                continue;
            }
            let mut s = Series { label: a.label().to_string(), mean: vec![], lower: vec![], upper: vec![] };
            for &p in &grid {
                let row = mine.iter().find(|r| r.percent == p).ok_or_else(|| ReportError::LengthMismatch {
                    series: a.label().to_string(),
                    len: mine.len(),
                    expected: grid.len(),
                })?;
                let hw = if row.ci95_half_width.is_finite() { row.ci95_half_width } else { 0.0 };
                s.mean.push(row.mean_acc);
                s.lower.push(row.mean_acc - hw);
                s.upper.push(row.mean_acc + hw);
            }
            series.push(s);
        }
        Ok(Self {
            title: title.to_string(),
            x_label: format!("{} probe (%)", family.as_str()),
            y_label: "Accuracy (%)".to_string(),
            x: grid.iter().map(|p| p * 100.0).collect(),
            series,
            width: 720,
            height: 440,
        })
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.series.is_empty() {
            return Err(ReportError::EmptySeries);
        }
        if self.x.is_empty() {
            return Err(ReportError::EmptyGrid);
        }
        let n = self.x.len();
        if let Some(i) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(ReportError::NonFinite { series: "x".into(), index: i });
        }
        for s in &self.series {
            for len in [s.mean.len(), s.lower.len(), s.upper.len()] {
                if len != n {
                    return Err(ReportError::LengthMismatch { series: s.label.clone(), len, expected: n });
                }
            }
            for i in 0..n {
                let (lo, m, hi) = (s.lower[i], s.mean[i], s.upper[i]);
                if !(lo.is_finite() && m.is_finite() && hi.is_finite()) {
                    return Err(ReportError::NonFinite { series: s.label.clone(), index: i });
                }
                if !(lo <= m && m <= hi) {
                    return Err(ReportError::InvalidBand { series: s.label.clone(), index: i });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

pub(crate) fn series_color(label: &str, index: usize) -> &'static str {
    const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];
    match label {
        "Abs" => "#d62728",
        "ReLU" => "#1f77b4",
        _ => PALETTE[index % PALETTE.len()],
    }
}

/// Tick positions covering `[lo, hi]` at a 1/2/5 × 10^k step.
pub(crate) fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).map(|v| if v == 0.0 { 0.0 } else { v }).collect()
}

pub(crate) fn format_tick(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

/// Maps data coordinates into the plot rectangle.
pub(crate) struct Frame {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
    }

    pub fn py(&self, y: f64) -> f64 {
        self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }

    /// Axis lines, ticks, tick labels and axis titles.
    pub fn draw_axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (l, t, r, b) = (self.left, self.top, self.right, self.bottom);
        let _ = writeln!(out, r##"<g class="axes" stroke="#333" stroke-width="1">"##);
        let _ = writeln!(out, r#"<line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/>"#);
        let _ = writeln!(out, r#"<line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}"/>"#);
        for v in nice_ticks(self.x0, self.x1, 8) {
            let x = self.px(v);
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}"/>"#, b + 5.0);
        }
        for v in nice_ticks(self.y0, self.y1, 6) {
            let y = self.py(v);
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}"/>"#, l - 5.0);
        }
        out.push_str("</g>\n");
        let _ = writeln!(out, r##"<g class="tick-labels" font-family="sans-serif" font-size="11" fill="#333">"##);
        for v in nice_ticks(self.x0, self.x1, 8) {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                self.px(v),
                b + 18.0,
                format_tick(v)
            );
        }
        for v in nice_ticks(self.y0, self.y1, 6) {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 8.0,
                self.py(v) + 4.0,
                format_tick(v)
            );
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
            (l + r) / 2.0,
            b + 40.0,
            xml_escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text class="y-label" x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            l - 50.0,
            (t + b) / 2.0,
            l - 50.0,
            (t + b) / 2.0,
            xml_escape(y_label)
        );
    }
}

pub(crate) fn svg_open(out: &mut String, width: u32, height: u32, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", xml_escape(title));
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#fff"/>"##);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        f64::from(width) / 2.0,
        xml_escape(title)
    );
}

/// Line chart with one `<path>` per mean curve and one translucent
/// `<polygon>` per confidence band.
pub fn emit_chart(spec: &ChartSpec) -> Result<String, ReportError> {
    spec.validate()?;
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let (mut x0, mut x1) = min_max(spec.x.iter().copied());
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let all_y = spec.series.iter().flat_map(|s| s.lower.iter().chain(&s.upper).copied());
    let (lo, hi) = min_max(all_y);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    let frame = Frame {
        left: 70.0,
        top: 40.0,
        right: w - 130.0,
        bottom: h - 60.0,
        x0,
        x1,
        y0: lo - pad,
        y1: hi + pad,
    };

    let mut out = String::new();
    svg_open(&mut out, spec.width, spec.height, &spec.title);
    frame.draw_axes(&mut out, &spec.x_label, &spec.y_label);

    for (i, s) in spec.series.iter().enumerate() {
        let color = series_color(&s.label, i);
        let mut points: Vec<String> = Vec::with_capacity(2 * spec.x.len());
        for (x, y) in spec.x.iter().zip(&s.upper) {
            points.push(format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)));
        }
        for (x, y) in spec.x.iter().zip(&s.lower).rev() {
            points.push(format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)));
        }
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            points.join(" ")
        );
    }
    for (i, s) in spec.series.iter().enumerate() {
        let color = series_color(&s.label, i);
        let d: Vec<String> = spec
            .x
            .iter()
            .zip(&s.mean)
            .enumerate()
            .map(|(k, (x, y))| format!("{}{:.2},{:.2}", if k == 0 { 'M' } else { 'L' }, frame.px(*x), frame.py(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<path class="mean" d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.join(" ")
        );
    }

    let _ = writeln!(out, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    for (i, s) in spec.series.iter().enumerate() {
        let y = frame.top + 10.0 + 20.0 * i as f64;
        let x = frame.right + 15.0;
        let color = series_color(&s.label, i);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            x + 20.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 26.0, y + 4.0, xml_escape(&s.label));
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

//! One-dimensional toy of how a single hidden unit selects features.
//!
//! Each feature is a Gaussian bump on the pre-activation axis. A unit with
//! boundary `b` computes `act(x − b)`; features whose mean output is smallest
//! are the ones the unit "selects". ReLU collapses everything below the
//! boundary to zero, so it selects the whole near-zero set. Abs folds the
//! negative side onto the positive one, which leaves only the feature sitting
//! on the boundary at the minimum.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use statrs::function::erf::erfc;
use thiserror::Error;

use crate::model::ActivationKind;
use crate::report::{format_tick, min_max, series_color, svg_open, xml_escape, Frame};

pub const QUADRATURE_POINTS: usize = 100_000;
const QUADRATURE_HALF_WIDTH_SDS: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum DemoError {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("scenario line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub label: char,
    pub mean: f64,
    pub sd: f64,
}

/// Threshold for counting a feature as selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    /// Fraction of the largest post-activation mean.
    FractionOfMax(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::FractionOfMax(0.05)
    }
}

impl Tolerance {
    pub fn resolve(self, means: &BTreeMap<char, f64>) -> f64 {
        match self {
            Tolerance::Absolute(eps) => eps,
            Tolerance::FractionOfMax(f) => f * means.values().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMixture {
    components: Vec<Component>,
    pub boundary: f64,
    pub tolerance: Tolerance,
}

impl FeatureMixture {
    pub fn new(components: Vec<Component>, boundary: f64, tolerance: Tolerance) -> Result<Self, DemoError> {
        let bad = |m: String| Err(DemoError::InvalidMixture(m));
        if components.is_empty() {
            return bad("no components".into());
        }
        let mut seen = BTreeSet::new();
        for c in &components {
            if !seen.insert(c.label) {
                return bad(format!("duplicate label {:?}", c.label));
            }
            if !(c.sd > 0.0 && c.sd.is_finite()) {
                return bad(format!("{}: sd must be positive, got {}", c.label, c.sd));
            }
            if !c.mean.is_finite() {
                return bad(format!("{}: non-finite mean", c.label));
            }
        }
        if !boundary.is_finite() {
            return bad("non-finite boundary".into());
        }
        let eps = match tolerance {
            Tolerance::Absolute(e) | Tolerance::FractionOfMax(e) => e,
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return bad(format!("tolerance must be positive, got {eps}"));
        }
        Ok(Self { components, boundary, tolerance })
    }

    /// Features a..e at −2, −1, 0, 1, 2 with sd 0.25. The boundary sits at
    /// 0 for Abs and at c's upper edge (0.5, two sd above c) for ReLU.
    pub fn canonical(activation: ActivationKind) -> Self {
        let components = "abcde"
            .chars()
            .zip([-2.0, -1.0, 0.0, 1.0, 2.0])
            .map(|(label, mean)| Component { label, mean, sd: 0.25 })
            .collect();
        let boundary = match activation {
            ActivationKind::Relu => 0.5,
            ActivationKind::Abs => 0.0,
        };
        Self::new(components, boundary, Tolerance::default()).expect("canonical mixture is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn with_boundary(&self, boundary: f64) -> Self {
        Self { boundary, ..self.clone() }
    }

    /// Mirror image of every component about the boundary.
    pub fn reflected(&self) -> Self {
        let b = self.boundary;
        let components = self.components.iter().map(|c| Component { mean: 2.0 * b - c.mean, ..*c }).collect();
        Self { components, ..self.clone() }
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// `P(X < x)` for `X ~ N(mean, sd²)`.
fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// `E[act(X − b)]` by the midpoint rule on `points` nodes over ±10 sd.
pub fn post_activation_mean(c: &Component, boundary: f64, activation: ActivationKind, points: usize) -> f64 {
    let lo = c.mean - QUADRATURE_HALF_WIDTH_SDS * c.sd;
    let h = 2.0 * QUADRATURE_HALF_WIDTH_SDS * c.sd / points as f64;
    let mut sum = 0.0;
    for k in 0..points {
        let x = lo + (k as f64 + 0.5) * h;
        sum += activation.apply(x - boundary) * normal_pdf(x, c.mean, c.sd);
    }
    sum * h
}

pub fn post_activation_means(mix: &FeatureMixture, activation: ActivationKind) -> BTreeMap<char, f64> {
    mix.components
        .iter()
        .map(|c| (c.label, post_activation_mean(c, mix.boundary, activation, QUADRATURE_POINTS)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub labels: BTreeSet<char>,
    /// Abs picked more than one feature: the boundary sits between features
    /// rather than on one.
    pub misaligned: bool,
}

impl Selection {
    pub fn label_string(&self) -> String {
        self.labels.iter().collect()
    }
}

/// ReLU selects every feature whose mean output is within tolerance of zero;
/// Abs selects those within tolerance of the smallest mean.
pub fn selected_features(mix: &FeatureMixture, activation: ActivationKind) -> Selection {
    let means = post_activation_means(mix, activation);
    let eps = mix.tolerance.resolve(&means);
    let labels: BTreeSet<char> = match activation {
        ActivationKind::Relu => means.iter().filter(|(_, &m)| m < eps).map(|(&l, _)| l).collect(),
        ActivationKind::Abs => {
            let min = means.values().copied().fold(f64::INFINITY, f64::min);
            means.iter().filter(|(_, &m)| m - min <= eps).map(|(&l, _)| l).collect()
        }
    };
    let misaligned = activation == ActivationKind::Abs && labels.len() > 1;
    Selection { labels, misaligned }
}

/// Selection after moving the boundary by each delta.
pub fn offset_experiment(mix: &FeatureMixture, activation: ActivationKind, deltas: &[f64]) -> Vec<(f64, Selection)> {
    deltas
        .iter()
        .map(|&d| (d, selected_features(&mix.with_boundary(mix.boundary + d), activation)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Densities on the pre-activation axis.
    Pre,
    /// Densities of `act(x − b)`.
    Post,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pre" => Ok(Stage::Pre),
            "post" => Ok(Stage::Post),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoCurve {
    pub label: char,
    pub points: Vec<(f64, f64)>,
}

/// Data behind a demo figure, in axis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoPlot {
    pub curves: Vec<DemoCurve>,
    pub boundary: f64,
    /// ReLU post stage: probability mass collapsed onto zero, per feature.
    pub point_masses: Vec<(char, f64)>,
    pub x_range: (f64, f64),
}

const CURVE_SAMPLES: usize = 400;
const MIN_POINT_MASS: f64 = 1e-4;

pub fn demo_plot(mix: &FeatureMixture, activation: ActivationKind, stage: Stage) -> DemoPlot {
    let b = mix.boundary;
    let spread = mix.components.iter().map(|c| 4.0 * c.sd).fold(0.0, f64::max);
    let sample = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        (0..=CURVE_SAMPLES)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / CURVE_SAMPLES as f64;
                (x, f(x))
            })
            .collect()
    };
    match stage {
        Stage::Pre => {
            let (lo, hi) = min_max(mix.components.iter().map(|c| c.mean).chain([b]));
            let (lo, hi) = (lo - spread, hi + spread);
            let curves = mix
                .components
                .iter()
                .map(|c| DemoCurve { label: c.label, points: sample(lo, hi, &|x| normal_pdf(x, c.mean, c.sd)) })
                .collect();
            DemoPlot { curves, boundary: b, point_masses: Vec::new(), x_range: (lo, hi) }
        }
        Stage::Post => {
            let hi = match activation {
                ActivationKind::Abs => mix.components.iter().map(|c| (c.mean - b).abs()).fold(0.0, f64::max),
                ActivationKind::Relu => mix.components.iter().map(|c| c.mean - b).fold(0.0, f64::max),
            } + spread;
            let curves = mix
                .components
                .iter()
                .map(|c| {
                    let density = |y: f64| match activation {
                        ActivationKind::Abs => normal_pdf(b + y, c.mean, c.sd) + normal_pdf(b - y, c.mean, c.sd),
                        ActivationKind::Relu => normal_pdf(b + y, c.mean, c.sd),
                    };
                    DemoCurve { label: c.label, points: sample(0.0, hi, &density) }
                })
                .collect();
            let point_masses = match activation {
                ActivationKind::Relu => mix
                    .components
                    .iter()
                    .map(|c| (c.label, normal_cdf(b, c.mean, c.sd)))
                    .filter(|&(_, m)| m > MIN_POINT_MASS)
                    .collect(),
                ActivationKind::Abs => Vec::new(),
            };
            DemoPlot { curves, boundary: 0.0, point_masses, x_range: (0.0, hi) }
        }
    }
}

/// One density `<path>` per feature and the boundary as a dashed line. The
/// ReLU post stage adds a `<circle>` at zero per feature with collapsed mass.
pub fn emit_demo_svg(mix: &FeatureMixture, activation: ActivationKind, stage: Stage) -> String {
    let plot = demo_plot(mix, activation, stage);
    let (w, h) = (640u32, 360u32);
    let y_max = plot.curves.iter().flat_map(|c| c.points.iter().map(|p| p.1)).fold(0.0, f64::max) * 1.1;
    let frame = Frame {
        left: 60.0,
        top: 40.0,
        right: f64::from(w) - 20.0,
        bottom: f64::from(h) - 60.0,
        x0: plot.x_range.0,
        x1: plot.x_range.1,
        y0: 0.0,
        y1: if y_max > 0.0 { y_max } else { 1.0 },
    };
    let title = match stage {
        Stage::Pre => "Features before activation".to_string(),
        Stage::Post => format!("Features after {}", activation.label()),
    };
    let x_label = match stage {
        Stage::Pre => "pre-activation x",
        Stage::Post => "activation output",
    };

    let mut out = String::new();
    svg_open(&mut out, w, h, &title);
    frame.draw_axes(&mut out, x_label, "density");
    for (i, c) in plot.curves.iter().enumerate() {
        let color = series_color("", i);
        let d: Vec<String> = c
            .points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| format!("{}{:.2},{:.2}", if k == 0 { 'M' } else { 'L' }, frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<path class="density" data-label="{}" d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            c.label,
            d.join(" ")
        );
        let &(px, py) = c.points.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty curve");
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            frame.px(px),
            frame.py(py) - 6.0,
            xml_escape(&c.label.to_string())
        );
    }
    let bx = frame.px(plot.boundary);
    let _ = writeln!(
        out,
        r#"<line class="boundary" x1="{bx:.2}" y1="{:.2}" x2="{bx:.2}" y2="{:.2}" stroke="red" stroke-width="1.5" stroke-dasharray="6,4"/>"#,
        frame.top,
        frame.bottom
    );
    for (i, &(label, mass)) in plot.point_masses.iter().enumerate() {
        let cy = frame.bottom - 10.0 - 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<circle class="point-mass" data-label="{label}" cx="{bx:.2}" cy="{cy:.2}" r="{:.2}" fill="black"><title>{label}: mass {} at 0</title></circle>"#,
            2.0 + 6.0 * mass.sqrt(),
            format_tick(mass)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mixture: FeatureMixture,
    pub activation: ActivationKind,
    pub deltas: Vec<f64>,
}

/// Reads a scenario file:
///
/// ```text
/// # comment
/// activation = abs
/// boundary = 0
/// tolerance = 0.05            # absolute; or tolerance_fraction = 0.05
/// component = a -2 0.25       # label mean sd
/// deltas = -1, 0, 0.5
/// ```
///
/// `boundary` defaults to 0, tolerance to 5% of the largest mean and deltas
/// to `[0]`.
pub fn parse_scenario(text: &str) -> Result<Scenario, DemoError> {
    let mut activation = None;
    let mut boundary = 0.0;
    let mut tolerance = Tolerance::default();
    let mut components = Vec::new();
    let mut deltas = vec![0.0];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| DemoError::Parse { line: i + 1, message };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
        let value = value.trim();
        match key.trim() {
            "activation" => activation = Some(value.parse::<ActivationKind>().map_err(err)?),
            "boundary" => boundary = num(value)?,
            "tolerance" => tolerance = Tolerance::Absolute(num(value)?),
            "tolerance_fraction" => tolerance = Tolerance::FractionOfMax(num(value)?),
            "deltas" => deltas = value.split(',').map(num).collect::<Result<_, _>>()?,
            "component" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [label, mean, sd] = parts[..] else {
                    return Err(err("component needs: label mean sd".into()));
                };
                let mut chars = label.chars();
                let (Some(label), None) = (chars.next(), chars.next()) else {
                    return Err(err(format!("label {label:?} must be one character")));
                };
                components.push(Component { label, mean: num(mean)?, sd: num(sd)? });
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    let activation = activation.ok_or(DemoError::Parse { line: 0, message: "missing activation".into() })?;
    Ok(Scenario { mixture: FeatureMixture::new(components, boundary, tolerance)?, activation, deltas })
}

//! The per-unit perturbation layer `y = min(scale·x + offset, clip)`, the
//! per-unit pre-activation ranges it is calibrated against, and the three
//! probe families built from them.
//!
//! Offset probes shift the boundary by `p·r` while keeping `x = r` fixed,
//! scale probes multiply every pre-activation by `p`, and cutoff probes clip
//! at `p·r`. Units whose range is zero are left untouched by offset and
//! cutoff probes.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::{Matrix, ShapeMismatch};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("perturbation vectors must have equal non-zero length, got {scale}/{offset}/{clip}")]
    Length { scale: usize, offset: usize, clip: usize },
    #[error("non-finite {field} at unit {unit}")]
    NonFinite { field: &'static str, unit: usize },
    #[error("probe percent {p} outside the {family} domain")]
    OutOfDomain { family: ProbeFamily, p: f64 },
    #[error("range sidecar: {0}")]
    Sidecar(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbeFamily {
    Offset,
    Scale,
    Cutoff,
}

impl ProbeFamily {
    pub const ALL: [ProbeFamily; 3] = [ProbeFamily::Offset, ProbeFamily::Scale, ProbeFamily::Cutoff];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeFamily::Offset => "offset",
            ProbeFamily::Scale => "scale",
            ProbeFamily::Cutoff => "cutoff",
        }
    }

    /// Offset `[-2, 1]`, scale and cutoff `(0, 10]`.
    pub fn domain_contains(self, p: f64) -> bool {
        match self {
            ProbeFamily::Offset => (-2.0..=1.0).contains(&p),
            ProbeFamily::Scale | ProbeFamily::Cutoff => p > 0.0 && p <= 10.0,
        }
    }

    /// The percent at which the probe leaves the model unchanged, if any.
    /// Cutoff only becomes a no-op once `p·r` clears every unit's maximum.
    pub fn identity_percent(self) -> Option<f64> {
        match self {
            ProbeFamily::Offset => Some(0.0),
            ProbeFamily::Scale => Some(1.0),
            ProbeFamily::Cutoff => None,
        }
    }
}

impl fmt::Display for ProbeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "offset" => Ok(ProbeFamily::Offset),
            "scale" => Ok(ProbeFamily::Scale),
            "cutoff" => Ok(ProbeFamily::Cutoff),
            other => Err(format!("unknown probe family {other:?}")),
        }
    }
}

/// Alternative readings of the probe formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProbeOptions {
    /// Offset probe uses `scale = (1 − p)·r` literally instead of `1 − p`.
    pub literal_offset: bool,
    /// Cutoff probe clips at `p·max` instead of `p·r`.
    pub cutoff_of_max: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    scale: Vec<f64>,
    offset: Vec<f64>,
    clip: Vec<f64>,
}

impl PerturbationConfig {
    pub fn new(scale: Vec<f64>, offset: Vec<f64>, clip: Vec<f64>) -> Result<Self, PerturbError> {
        if scale.is_empty() || scale.len() != offset.len() || scale.len() != clip.len() {
            return Err(PerturbError::Length { scale: scale.len(), offset: offset.len(), clip: clip.len() });
        }
        let bad = |v: &[f64], ok: fn(f64) -> bool| v.iter().position(|&x| !ok(x));
        if let Some(unit) = bad(&scale, f64::is_finite) {
            return Err(PerturbError::NonFinite { field: "scale", unit });
        }
        if let Some(unit) = bad(&offset, f64::is_finite) {
            return Err(PerturbError::NonFinite { field: "offset", unit });
        }
        if let Some(unit) = bad(&clip, |c| c.is_finite() || c == f64::INFINITY) {
            return Err(PerturbError::NonFinite { field: "clip", unit });
        }
        Ok(Self { scale, offset, clip })
    }

    /// `scale = 1, offset = 0, clip = ∞` for `h` units.
    pub fn identity(h: usize) -> Self {
        assert!(h >= 1, "identity perturbation needs at least one unit");
        Self { scale: vec![1.0; h], offset: vec![0.0; h], clip: vec![f64::INFINITY; h] }
    }

    pub fn hidden(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn clip(&self) -> &[f64] {
        &self.clip
    }

    pub fn is_identity(&self) -> bool {
        self.scale.iter().all(|&s| s == 1.0)
            && self.offset.iter().all(|&o| o == 0.0)
            && self.clip.iter().all(|&c| c == f64::INFINITY)
    }

    /// Single unit, single value. The affine part is one fused
    /// multiply-add, so the offset probe's fixed point at `x = r` holds
    /// bit-exactly.
    #[inline]
    pub fn apply_unit(&self, unit: usize, x: f64) -> f64 {
        self.scale[unit].mul_add(x, self.offset[unit]).min(self.clip[unit])
    }

    pub fn apply(&self, preact: &Matrix) -> Result<Matrix, ShapeMismatch> {
        let mut out = preact.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, preact: &mut Matrix) -> Result<(), ShapeMismatch> {
        let h = self.hidden();
        if preact.cols() != h {
            return Err(ShapeMismatch::new("perturbation", preact.shape(), (1, h)));
        }
        for row in preact.as_mut_slice().chunks_exact_mut(h) {
            for (i, x) in row.iter_mut().enumerate() {
                *x = self.apply_unit(i, *x);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRange {
    pub min: f64,
    pub max: f64,
}

impl NodeRange {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Per-unit min/max of hidden pre-activations over a data split.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRangeTable {
    nodes: Vec<NodeRange>,
}

impl NodeRangeTable {
    pub fn new(nodes: Vec<NodeRange>) -> Self {
        debug_assert!(nodes.iter().all(|n| n.min <= n.max));
        Self { nodes }
    }

    /// Column-wise extremes of an `n×H` pre-activation matrix.
    pub fn from_preact(preact: &Matrix) -> Self {
        let h = preact.cols();
        let mut nodes = vec![NodeRange { min: f64::INFINITY, max: f64::NEG_INFINITY }; h];
        for row in preact.row_iter() {
            for (n, &x) in nodes.iter_mut().zip(row) {
                n.min = n.min.min(x);
                n.max = n.max.max(x);
            }
        }
        if preact.rows() == 0 {
            nodes.iter_mut().for_each(|n| *n = NodeRange { min: 0.0, max: 0.0 });
        }
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeRange] {
        &self.nodes
    }

    pub fn range(&self, unit: usize) -> f64 {
        self.nodes[unit].range()
    }

    /// Range sidecar: `node,min,max,range`, one row per hidden unit.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PerturbError> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| PerturbError::Sidecar(e.to_string());
        wtr.write_record(["node", "min", "max", "range"]).map_err(err)?;
        for (i, n) in self.nodes.iter().enumerate() {
            wtr.write_record([i.to_string(), n.min.to_string(), n.max.to_string(), n.range().to_string()])
                .map_err(err)?;
        }
        wtr.flush().map_err(|e| PerturbError::Sidecar(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PerturbError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut nodes = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| PerturbError::Sidecar(e.to_string()))?;
            let field = |k: usize| -> Result<f64, PerturbError> {
                rec.get(k)
                    .ok_or_else(|| PerturbError::Sidecar(format!("row {i}: missing column {k}")))?
                    .parse::<f64>()
                    .map_err(|e| PerturbError::Sidecar(format!("row {i}: {e}")))
            };
            let node = field(0)? as usize;
            if node != i {
                return Err(PerturbError::Sidecar(format!("row {i} names node {node}")));
            }
            let (min, max) = (field(1)?, field(2)?);
            if min.partial_cmp(&max).is_none_or(Ordering::is_gt) {
                return Err(PerturbError::Sidecar(format!("row {i}: min {min} > max {max}")));
            }
            nodes.push(NodeRange { min, max });
        }
        Ok(Self { nodes })
    }
}

fn check_domain(family: ProbeFamily, p: f64) -> Result<(), PerturbError> {
    if family.domain_contains(p) {
        Ok(())
    } else {
        Err(PerturbError::OutOfDomain { family, p })
    }
}

/// Offset for scale `s` such that `fma(s, r, offset) == r`. The single
/// rounding of `r − s·r` already lands exactly whenever `|p| <= 1` or `s` is
/// a small integer. Otherwise the offset's ulp may be coarser than `r`'s and
/// a neighbour is tried; if none lands, `apply(r)` is within one ulp of `r`.
fn fixed_point_offset(s: f64, r: f64) -> f64 {
    let base = -s.mul_add(r, -r);
    [base, base.next_up(), base.next_down()]
        .into_iter()
        .find(|&o| s.mul_add(r, o) == r)
        .unwrap_or(base)
}

/// Shifts each unit's boundary by `p·r` while keeping the top of a
/// `[0, r]` response in place: `scale = 1 − p`, `offset = r − scale·r`
/// (which is `p·r` up to one rounding).
pub fn make_offset_probe(
    p: f64,
    ranges: &NodeRangeTable,
    options: ProbeOptions,
) -> Result<PerturbationConfig, PerturbError> {
    check_domain(ProbeFamily::Offset, p)?;
    let h = ranges.len();
    let mut scale = vec![1.0; h];
    let mut offset = vec![0.0; h];
    for (i, node) in ranges.nodes().iter().enumerate() {
        let r = node.range();
        if r <= 0.0 {
            continue;
        }
        if options.literal_offset {
            scale[i] = (1.0 - p) * r;
            offset[i] = p * r;
        } else {
            scale[i] = 1.0 - p;
            offset[i] = fixed_point_offset(scale[i], r);
        }
    }
    PerturbationConfig::new(scale, offset, vec![f64::INFINITY; h])
}

pub fn make_scale_probe(p: f64, h: usize) -> Result<PerturbationConfig, PerturbError> {
    check_domain(ProbeFamily::Scale, p)?;
    PerturbationConfig::new(vec![p; h], vec![0.0; h], vec![f64::INFINITY; h])
}

pub fn make_cutoff_probe(
    p: f64,
    ranges: &NodeRangeTable,
    options: ProbeOptions,
) -> Result<PerturbationConfig, PerturbError> {
    check_domain(ProbeFamily::Cutoff, p)?;
    let h = ranges.len();
    let clip = ranges
        .nodes()
        .iter()
        .map(|n| {
            if n.range() <= 0.0 {
                f64::INFINITY
            } else if options.cutoff_of_max {
                p * n.max
            } else {
                p * n.range()
            }
        })
        .collect();
    PerturbationConfig::new(vec![1.0; h], vec![0.0; h], clip)
}

pub fn make_probe(
    family: ProbeFamily,
    p: f64,
    ranges: &NodeRangeTable,
    options: ProbeOptions,
) -> Result<PerturbationConfig, PerturbError> {
    match family {
        ProbeFamily::Offset => make_offset_probe(p, ranges, options),
        ProbeFamily::Scale => make_scale_probe(p, ranges.len()),
        ProbeFamily::Cutoff => make_cutoff_probe(p, ranges, options),
    }
}

//! Summary statistics for sweep results: sample mean and standard
//! deviation, Student-t CDF and quantile, paired two-sided t-tests, and 95%
//! confidence half-widths.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use statrs::function::beta::checked_beta_reg;
use thiserror::Error;

use crate::experiment::{BaselineRecord, RunRecord, Split};
use crate::model::ActivationKind;
use crate::perturb::ProbeFamily;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDf(u32),
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("no baseline for {activation} seed {seed} on the {split} split")]
    MissingBaseline { activation: ActivationKind, seed: u64, split: Split },
    #[error("stats csv: {0}")]
    Csv(String),
}

pub fn mean(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Arithmetic mean and unbiased (n − 1) standard deviation.
pub fn mean_sd(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: xs.len() });
    }
    let m = mean(xs)?;
    if xs.iter().all(|&x| x == xs[0]) {
        return Ok((m, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((m, (ss / (xs.len() - 1) as f64).sqrt()))
}

/// `I_x(df/2, 1/2)` with `x = df/(df + t²)`: the two-sided tail mass
/// beyond `|t|`.
fn two_sided_tail(t: f64, df: u32) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let nu = f64::from(df);
    let x = nu / (nu + t * t);
    checked_beta_reg(nu / 2.0, 0.5, x.clamp(0.0, 1.0)).expect("parameters are in range")
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: u32) -> Result<f64, StatsError> {
    if df < 1 {
        return Err(StatsError::InvalidDf(df));
    }
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    let half_tail = 0.5 * two_sided_tail(t, df);
    Ok(if t >= 0.0 { 1.0 - half_tail } else { half_tail })
}

/// Inverse of [`t_cdf`] by bisection, to 1e-10 in `t`.
pub fn t_quantile(prob: f64, df: u32) -> Result<f64, StatsError> {
    if df < 1 {
        return Err(StatsError::InvalidDf(df));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(StatsError::InvalidProbability(prob));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    let upper = prob > 0.5;
    let target = if upper { prob } else { 1.0 - prob };
    let (mut lo, mut hi) = (0.0, 1.0);
    while t_cdf(hi, df)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok(if upper { q } else { -q })
}

const NOISE_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: u32,
}

/// Paired two-sided t-test on `d = perturbed − baseline`.
///
/// Identical differences have no spread: the statistic becomes `±∞` with
/// `p = 0`, or `t = 0`, `p = 1` when every difference is zero. Differences
/// that agree to within rounding of the inputs count as identical.
pub fn paired_t_test(perturbed: &[f64], baseline: &[f64]) -> Result<TTest, StatsError> {
    if perturbed.len() != baseline.len() {
        return Err(StatsError::LengthMismatch(perturbed.len(), baseline.len()));
    }
    let d: Vec<f64> = perturbed.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let (m, sd) = mean_sd(&d)?;
    let df = (d.len() - 1) as u32;
    // spreads at rounding level of the inputs count as none
    let magnitude = perturbed.iter().chain(baseline).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let noise = NOISE_RELATIVE * magnitude;
    if sd <= noise {
        return Ok(if m.abs() <= noise {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest { t: m.signum() * f64::INFINITY, p: 0.0, df }
        });
    }
    let t = m / (sd / (d.len() as f64).sqrt());
    Ok(TTest { t, p: two_sided_tail(t, df), df })
}

/// Half-width of the 95% confidence interval for the mean.
pub fn ci95(xs: &[f64]) -> Result<f64, StatsError> {
    let (_, sd) = mean_sd(xs)?;
    let t_star = t_quantile(0.975, (xs.len() - 1) as u32)?;
    Ok(t_star * sd / (xs.len() as f64).sqrt())
}

/// Per `(activation, family, percent)` summary. Accuracy fields are in
/// percent.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub activation: ActivationKind,
    pub family: ProbeFamily,
    pub percent: f64,
    pub n: usize,
    pub mean_acc: f64,
    pub sd_acc: f64,
    pub ci95_half_width: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// Groups records by `(activation, family, percent)` and tests each group
/// against the same-seed baseline on the same split. Groups with a single
/// seed report NaN for the spread and test fields.
pub fn aggregate(records: &[RunRecord], baselines: &[BaselineRecord]) -> Result<Vec<StatRow>, StatsError> {
    let lookup: BTreeMap<(ActivationKind, u64), &BaselineRecord> =
        baselines.iter().map(|b| ((b.activation, b.seed), b)).collect();

    let mut groups: BTreeMap<(ActivationKind, ProbeFamily, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.activation, r.family, percent_key(r.percent))).or_default().push(r);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((activation, family, _), mut group) in groups {
        group.sort_by_key(|r| r.seed);
        let mut perturbed = Vec::with_capacity(group.len());
        let mut base = Vec::with_capacity(group.len());
        for r in &group {
            let missing = || StatsError::MissingBaseline { activation, seed: r.seed, split: r.split };
            let b = lookup.get(&(activation, r.seed)).ok_or_else(missing)?;
            let b_acc = match r.split {
                Split::Train => b.train_accuracy,
                Split::Test => b.test_accuracy.ok_or_else(missing)?,
            };
            perturbed.push(100.0 * r.accuracy);
            base.push(100.0 * b_acc);
        }
        let n = perturbed.len();
        let mean_acc = mean(&perturbed)?;
        let (sd_acc, ci, test) = if n >= 2 {
            (mean_sd(&perturbed)?.1, ci95(&perturbed)?, paired_t_test(&perturbed, &base)?)
        } else {
            (f64::NAN, f64::NAN, TTest { t: f64::NAN, p: f64::NAN, df: 0 })
        };
        rows.push(StatRow {
            activation,
            family,
            percent: group[0].percent,
            n,
            mean_acc,
            sd_acc,
            ci95_half_width: ci,
            t_stat: test.t,
            p_value: test.p,
        });
    }
    rows.sort_by(|a, b| {
        (a.activation, a.family)
            .cmp(&(b.activation, b.family))
            .then(a.percent.total_cmp(&b.percent))
    });
    Ok(rows)
}

/// Orders floats by value for use as a map key.
fn percent_key(p: f64) -> u64 {
    let bits = p.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        v.to_string()
    }
}

pub const STATS_HEADER: [&str; 9] =
    ["activation", "family", "percent", "n", "mean_acc", "sd_acc", "ci95", "t_stat", "p_value"];

pub fn write_stats_csv<W: Write>(w: W, rows: &[StatRow]) -> Result<(), StatsError> {
    let err = |e: csv::Error| StatsError::Csv(e.to_string());
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(STATS_HEADER).map_err(err)?;
    for r in rows {
        wtr.write_record([
            r.activation.as_str().to_string(),
            r.family.as_str().to_string(),
            format_float(r.percent),
            r.n.to_string(),
            format_float(r.mean_acc),
            format_float(r.sd_acc),
            format_float(r.ci95_half_width),
            format_float(r.t_stat),
            format_float(r.p_value),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| StatsError::Csv(e.to_string()))
}

pub fn read_stats_csv<R: Read>(r: R) -> Result<Vec<StatRow>, StatsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| StatsError::Csv(e.to_string()))?;
        let get = |i: usize| rec.get(i).ok_or_else(|| StatsError::Csv(format!("missing column {i}")));
        let num = |i: usize| -> Result<f64, StatsError> {
            get(i)?.parse::<f64>().map_err(|e| StatsError::Csv(e.to_string()))
        };
        rows.push(StatRow {
            activation: get(0)?.parse().map_err(StatsError::Csv)?,
            family: get(1)?.parse().map_err(StatsError::Csv)?,
            percent: num(2)?,
            n: get(3)?.parse().map_err(|e: std::num::ParseIntError| StatsError::Csv(e.to_string()))?,
            mean_acc: num(4)?,
            sd_acc: num(5)?,
            ci95_half_width: num(6)?,
            t_stat: num(7)?,
            p_value: num(8)?,
        });
    }
    Ok(rows)
}

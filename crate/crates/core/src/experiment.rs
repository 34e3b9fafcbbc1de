//! Multi-seed training, probe sweeps and the CSV files that hold their
//! results.
//!
//! Everything for one experiment lives in a single output directory:
//!
//! ```text
//! ckpt_{activation}_seed{seed}.apm          trained weights
//! ckpt_{activation}_seed{seed}.ranges.csv   per-unit pre-activation ranges
//! ckpt_{activation}_seed{seed}.log          "epoch,loss" per epoch
//! baselines.csv
//! results.csv
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::idx::{self, IdxError, LabelSet, NormalizationParams};
use crate::model::{self, ActivationKind, ModelError, TrainConfig};
use crate::numerics::Matrix;
use crate::perturb::{self, NodeRangeTable, PerturbError, PerturbationConfig, ProbeFamily, ProbeOptions};

pub const BASELINES_FILE: &str = "baselines.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const WORKERS_ENV: &str = "ACTPROBE_WORKERS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training {activation} seed {seed}: {source}")]
    Training { activation: ActivationKind, seed: u64, source: ModelError },
    #[error("duplicate seed {0}")]
    DuplicateSeed(u64),
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("checkpoint {0} has no range sidecar")]
    MissingSidecar(PathBuf),
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("no test split in {0}")]
    NoTestSplit(PathBuf),
    #[error("no {what} files in {dir}")]
    MissingData { what: &'static str, dir: PathBuf },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: impl fmt::Display, message: impl fmt::Display) -> ExperimentError {
    ExperimentError::Csv { path: path.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Normalized images with their labels.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub x: Matrix,
    pub y: LabelSet,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: LabeledData,
    pub test: Option<LabeledData>,
    pub normalization: NormalizationParams,
    pub dir: PathBuf,
}

fn find_idx(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn load_pair(
    dir: &Path,
    prefix: &str,
    subset: Option<usize>,
    norm: NormalizationParams,
) -> Result<Option<LabeledData>, ExperimentError> {
    let images = find_idx(dir, &format!("{prefix}-images-idx3-ubyte"));
    let labels = find_idx(dir, &format!("{prefix}-labels-idx1-ubyte"));
    let (Some(images), Some(labels)) = (images, labels) else {
        return Ok(None);
    };
    let mut images = idx::read_idx_images(&images)?;
    let mut labels = idx::read_idx_labels(&labels)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch { images: images.count, labels: labels.len() }.into());
    }
    if let Some(n) = subset {
        images.truncate(n);
        labels.truncate(n);
    }
    Ok(Some(LabeledData { x: idx::normalize(&images, norm), y: labels }))
}

impl Dataset {
    /// Loads `train-*` (required) and `t10k-*` (optional) IDX files, plain or
    /// gzipped. `subset` keeps the first `n` training examples.
    pub fn load(dir: &Path, subset: Option<usize>) -> Result<Self, ExperimentError> {
        let norm = NormalizationParams::MNIST;
        let train = load_pair(dir, "train", subset, norm)?
            .ok_or_else(|| ExperimentError::MissingData { what: "train", dir: dir.to_path_buf() })?;
        let test = load_pair(dir, "t10k", None, norm)?;
        Ok(Self { train, test, normalization: norm, dir: dir.to_path_buf() })
    }

    pub fn split(&self, split: Split) -> Result<&LabeledData, ExperimentError> {
        match split {
            Split::Train => Ok(&self.train),
            Split::Test => self.test.as_ref().ok_or_else(|| ExperimentError::NoTestSplit(self.dir.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    /// Training settings; the seed field is overwritten per run.
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Paper => TrainConfig { epochs: 5000, learning_rate: 0.001, hidden: 784, seed: 1 },
            Profile::Desk => TrainConfig { epochs: 1000, learning_rate: 0.1, hidden: 128, seed: 1 },
        }
    }

    pub fn seeds(self) -> Vec<u64> {
        match self {
            Profile::Paper => (1..=20).collect(),
            Profile::Desk => (1..=5).collect(),
        }
    }

    /// Number of leading training examples used; `None` means all of them.
    pub fn subset(self) -> Option<usize> {
        match self {
            Profile::Paper => None,
            Profile::Desk => Some(10_000),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

fn percents(values: &[i32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v) / 100.0).collect()
}

/// Probe grids as fractions, ascending.
pub fn default_grids() -> BTreeMap<ProbeFamily, Vec<f64>> {
    BTreeMap::from([
        (
            ProbeFamily::Offset,
            percents(&[-200, -100, -75, -50, -25, -10, -5, -3, -2, -1, 0, 1, 2, 3, 5, 10, 25, 50, 75, 100]),
        ),
        (ProbeFamily::Scale, percents(&[1, 5, 10, 25, 50, 100, 1000])),
        (ProbeFamily::Cutoff, percents(&[1, 5, 10, 20, 30, 40, 50, 75, 100])),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub family: ProbeFamily,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub split: Split,
}

impl SweepSpec {
    pub fn new(family: ProbeFamily, grid: Vec<f64>, seeds: Vec<u64>, split: Split) -> Result<Self, ExperimentError> {
        if grid.is_empty() {
            return Err(ExperimentError::InvalidSpec("empty grid".into()));
        }
        if grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(ExperimentError::InvalidSpec("grid must be strictly ascending".into()));
        }
        if let Some(&p) = grid.iter().find(|&&p| !family.domain_contains(p)) {
            return Err(PerturbError::OutOfDomain { family, p }.into());
        }
        check_distinct(&seeds)?;
        Ok(Self { family, grid, seeds, split })
    }
}

fn check_distinct(seeds: &[u64]) -> Result<(), ExperimentError> {
    let mut seen = BTreeSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(ExperimentError::DuplicateSeed(s));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub activation: ActivationKind,
    pub family: ProbeFamily,
    pub percent: f64,
    pub seed: u64,
    pub split: Split,
    pub accuracy: f64,
}

/// Identity of a measurement; a results file holds at most one record per key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub activation: ActivationKind,
    pub family: ProbeFamily,
    percent_bits: u64,
    pub seed: u64,
    pub split: Split,
}

/// Maps floats to integers with the same ordering.
fn ordered_bits(p: f64) -> u64 {
    let bits = (p + 0.0).to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            activation: self.activation,
            family: self.family,
            percent_bits: ordered_bits(self.percent),
            seed: self.seed,
            split: self.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRecord {
    pub activation: ActivationKind,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub final_loss: f64,
}

pub fn checkpoint_path(dir: &Path, activation: ActivationKind, seed: u64) -> PathBuf {
    dir.join(format!("ckpt_{}_seed{seed}.apm", activation.as_str()))
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("ranges.csv")
}

pub fn log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log")
}

/// Thread pool sized by `ACTPROBE_WORKERS`, defaulting to the number of
/// cores. Results never depend on the size.
pub fn worker_pool() -> rayon::ThreadPool {
    let n = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}

fn write_ranges(path: &Path, ranges: &NodeRangeTable) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    ranges.write_csv(&mut buf)?;
    write_file(path, &buf)
}

fn read_ranges(path: &Path) -> Result<NodeRangeTable, ExperimentError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(NodeRangeTable::read_csv(f)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    crate::fetch::write_atomically(path, bytes).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Recomputes the range sidecar of a checkpoint from the training split.
pub fn write_sidecar(checkpoint: &Path, data: &Dataset) -> Result<NodeRangeTable, ExperimentError> {
    let ck = Checkpoint::load(checkpoint)?;
    let preact = model::preactivation(&ck.params, &data.train.x).map_err(ModelError::from)?;
    let ranges = NodeRangeTable::from_preact(&preact);
    write_ranges(&sidecar_path(checkpoint), &ranges)?;
    Ok(ranges)
}

fn train_one(
    config: &TrainConfig,
    activation: ActivationKind,
    seed: u64,
    data: &Dataset,
    out_dir: &Path,
) -> Result<BaselineRecord, ExperimentError> {
    let path = checkpoint_path(out_dir, activation, seed);
    let wrap = |source| ExperimentError::Training { activation, seed, source };

    let ck = if path.is_file() {
        Checkpoint::load(&path)?
    } else {
        let config = TrainConfig { seed, ..config.clone() };
        let mut log = String::from("epoch,loss\n");
        let trained = model::train(&config, &data.train.x, &data.train.y, activation, &mut |epoch, loss| {
            log.push_str(&format!("{epoch},{loss}\n"));
        });
        write_file(&log_path(&path), log.as_bytes())?;
        // checkpoints store f32, so everything downstream uses the rounded weights
        let params = trained.map_err(wrap)?.quantized_f32();
        let ck = Checkpoint { params, seed, normalization: data.normalization };
        ck.save(&path)?;
        ck
    };

    let trace = model::forward_unperturbed(&ck.params, &data.train.x).map_err(wrap)?;
    let final_loss = model::loss_cross_entropy(&trace.logits, &data.train.y).map_err(ModelError::from)?;
    let train_accuracy = model::accuracy_from_logits(&trace.logits, &data.train.y).map_err(ModelError::from)?;
    if !sidecar_path(&path).is_file() {
        write_ranges(&sidecar_path(&path), &NodeRangeTable::from_preact(&trace.preact))?;
    }
    let test_accuracy = match &data.test {
        Some(test) => {
            let identity = PerturbationConfig::identity(ck.params.hidden());
            Some(model::evaluate(&ck.params, &test.x, &test.y, &identity)?)
        }
        None => None,
    };
    Ok(BaselineRecord { activation, seed, train_accuracy, test_accuracy, final_loss })
}

/// Trains one model per `(activation, seed)`, or reuses a checkpoint already
/// present in `out_dir`. Writes checkpoints, range sidecars and loss logs.
/// Records come back in `(activation, seed)` order.
pub fn run_baselines(
    config: &TrainConfig,
    seeds: &[u64],
    activations: &[ActivationKind],
    data: &Dataset,
    out_dir: &Path,
) -> Result<Vec<BaselineRecord>, ExperimentError> {
    check_distinct(seeds)?;
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let jobs: Vec<(ActivationKind, u64)> = activations
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let mut records = worker_pool().install(|| {
        jobs.par_iter()
            .map(|&(a, s)| train_one(config, a, s, data, out_dir))
            .collect::<Result<Vec<_>, _>>()
    })?;
    records.sort_by_key(|r| (r.activation, r.seed));
    Ok(records)
}

/// Checkpoint paths for every `(activation, seed)`, failing on the first
/// one that does not exist.
pub fn find_checkpoints(
    dir: &Path,
    activations: &[ActivationKind],
    seeds: &[u64],
) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for &a in activations {
        for &s in seeds {
            let p = checkpoint_path(dir, a, s);
            if !p.is_file() {
                return Err(ExperimentError::MissingCheckpoint(p));
            }
            out.push(p);
        }
    }
    Ok(out)
}

fn sweep_checkpoint(
    spec: &SweepSpec,
    path: &Path,
    data: &LabeledData,
    options: ProbeOptions,
    skip: &BTreeSet<RecordKey>,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let sidecar = sidecar_path(path);
    if !sidecar.is_file() {
        return Err(ExperimentError::MissingSidecar(path.to_path_buf()));
    }
    let ranges = read_ranges(&sidecar)?;
    let ck = Checkpoint::load(path)?;
    if ranges.len() != ck.params.hidden() {
        let shape = crate::numerics::ShapeMismatch::new("sidecar", (ranges.len(), 2), (ck.params.hidden(), 2));
        return Err(ModelError::from(shape).into());
    }
    let activation = ck.params.activation;
    let pending: Vec<f64> = spec
        .grid
        .iter()
        .copied()
        .filter(|&percent| {
            let key = RunRecord { activation, family: spec.family, percent, seed: ck.seed, split: spec.split, accuracy: 0.0 }
                .key();
            !skip.contains(&key)
        })
        .collect();
    if pending.is_empty() {
        return Ok(Vec::new());
    }
    let preact = model::preactivation(&ck.params, &data.x).map_err(ModelError::from)?;
    pending
        .par_iter()
        .map(|&percent| {
            let pert = perturb::make_probe(spec.family, percent, &ranges, options)?;
            let accuracy = model::evaluate_preact(&ck.params, &preact, &data.y, &pert)?;
            Ok(RunRecord { activation, family: spec.family, percent, seed: ck.seed, split: spec.split, accuracy })
        })
        .collect()
}

/// Evaluates every `(checkpoint, percent)` pair of the sweep and returns the
/// records sorted by key.
pub fn run_sweep(
    spec: &SweepSpec,
    checkpoints: &[PathBuf],
    data: &Dataset,
    options: ProbeOptions,
) -> Result<Vec<RunRecord>, ExperimentError> {
    run_sweep_skipping(spec, checkpoints, data, options, &BTreeSet::new())
}

/// [`run_sweep`] without the pairs whose key is in `skip`.
pub fn run_sweep_skipping(
    spec: &SweepSpec,
    checkpoints: &[PathBuf],
    data: &Dataset,
    options: ProbeOptions,
    skip: &BTreeSet<RecordKey>,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let split = data.split(spec.split)?;
    let nested = worker_pool().install(|| {
        checkpoints
            .par_iter()
            .map(|p| sweep_checkpoint(spec, p, split, options, skip))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    records.sort_by_key(RunRecord::key);
    Ok(records)
}

pub const RESULTS_HEADER: [&str; 6] = ["activation", "family", "percent", "seed", "split", "accuracy"];
pub const BASELINES_HEADER: [&str; 5] = ["activation", "seed", "train_acc", "test_acc", "loss"];

pub fn write_results_csv<W: Write>(w: W, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let e = |m: csv::Error| csv_err("results", m);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RESULTS_HEADER).map_err(e)?;
    for r in records {
        wtr.write_record([
            r.activation.as_str().to_string(),
            r.family.as_str().to_string(),
            r.percent.to_string(),
            r.seed.to_string(),
            r.split.as_str().to_string(),
            r.accuracy.to_string(),
        ])
        .map_err(e)?;
    }
    wtr.flush().map_err(|m| csv_err("results", m))
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str, ExperimentError> {
    rec.get(i).ok_or_else(|| csv_err(name, format!("missing column {i}")))
}

fn parse<T: FromStr>(s: &str, name: &str) -> Result<T, ExperimentError>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| csv_err(name, format!("{s:?}: {e}")))
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<RunRecord>, ExperimentError> {
    let name = "results";
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(r).records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let accuracy: f64 = parse(field(&rec, 5, name)?, name)?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(csv_err(name, format!("accuracy {accuracy} outside [0, 1]")));
        }
        out.push(RunRecord {
            activation: parse(field(&rec, 0, name)?, name)?,
            family: parse(field(&rec, 1, name)?, name)?,
            percent: parse(field(&rec, 2, name)?, name)?,
            seed: parse(field(&rec, 3, name)?, name)?,
            split: parse(field(&rec, 4, name)?, name)?,
            accuracy,
        });
    }
    Ok(out)
}

pub fn write_baselines_csv<W: Write>(w: W, records: &[BaselineRecord]) -> Result<(), ExperimentError> {
    let e = |m: csv::Error| csv_err("baselines", m);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BASELINES_HEADER).map_err(e)?;
    for r in records {
        wtr.write_record([
            r.activation.as_str().to_string(),
            r.seed.to_string(),
            r.train_accuracy.to_string(),
            r.test_accuracy.map(|v| v.to_string()).unwrap_or_default(),
            r.final_loss.to_string(),
        ])
        .map_err(e)?;
    }
    wtr.flush().map_err(|m| csv_err("baselines", m))
}

pub fn read_baselines_csv<R: Read>(r: R) -> Result<Vec<BaselineRecord>, ExperimentError> {
    let name = "baselines";
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(r).records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let test = field(&rec, 3, name)?;
        out.push(BaselineRecord {
            activation: parse(field(&rec, 0, name)?, name)?,
            seed: parse(field(&rec, 1, name)?, name)?,
            train_accuracy: parse(field(&rec, 2, name)?, name)?,
            test_accuracy: if test.is_empty() { None } else { Some(parse(test, name)?) },
            final_loss: parse(field(&rec, 4, name)?, name)?,
        });
    }
    Ok(out)
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, ExperimentError> {
    match std::fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ExperimentError::Io { path: path.to_path_buf(), source: e }),
    }
}

pub fn load_results(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    match read_optional(path)? {
        Some(b) => read_results_csv(&b[..]).map_err(|e| relabel(e, path)),
        None => Ok(Vec::new()),
    }
}

pub fn load_baselines(path: &Path) -> Result<Vec<BaselineRecord>, ExperimentError> {
    match read_optional(path)? {
        Some(b) => read_baselines_csv(&b[..]).map_err(|e| relabel(e, path)),
        None => Ok(Vec::new()),
    }
}

fn relabel(e: ExperimentError, path: &Path) -> ExperimentError {
    match e {
        ExperimentError::Csv { message, .. } => csv_err(path.display(), message),
        other => other,
    }
}

/// Adds `records` to the results file. Keys already present keep their
/// stored value. The file is rewritten sorted by key, so its bytes do not
/// depend on the order in which work finished. Returns how many records
/// were new.
pub fn merge_results(path: &Path, records: &[RunRecord]) -> Result<usize, ExperimentError> {
    let mut all: BTreeMap<RecordKey, RunRecord> = load_results(path)?.into_iter().map(|r| (r.key(), r)).collect();
    let before = all.len();
    for r in records {
        all.entry(r.key()).or_insert_with(|| r.clone());
    }
    let added = all.len() - before;
    let sorted: Vec<RunRecord> = all.into_values().collect();
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &sorted)?;
    write_file(path, &buf)?;
    Ok(added)
}

/// Replaces or inserts baseline rows by `(activation, seed)` and rewrites the
/// file sorted.
pub fn merge_baselines(path: &Path, records: &[BaselineRecord]) -> Result<(), ExperimentError> {
    let mut all: BTreeMap<(ActivationKind, u64), BaselineRecord> =
        load_baselines(path)?.into_iter().map(|r| ((r.activation, r.seed), r)).collect();
    for r in records {
        all.insert((r.activation, r.seed), r.clone());
    }
    let sorted: Vec<BaselineRecord> = all.into_values().collect();
    let mut buf = Vec::new();
    write_baselines_csv(&mut buf, &sorted)?;
    write_file(path, &buf)
}

/// Runs a sweep against the results file in `out_dir`, evaluating only keys
/// it does not hold yet. Returns `(added, skipped)`.
pub fn sweep_into(
    out_dir: &Path,
    spec: &SweepSpec,
    activations: &[ActivationKind],
    data: &Dataset,
    options: ProbeOptions,
) -> Result<(usize, usize), ExperimentError> {
    let results = out_dir.join(RESULTS_FILE);
    let done: BTreeSet<RecordKey> = load_results(&results)?.iter().map(RunRecord::key).collect();
    let checkpoints = find_checkpoints(out_dir, activations, &spec.seeds)?;
    let total = checkpoints.len() * spec.grid.len();
    let records = run_sweep_skipping(spec, &checkpoints, data, options, &done)?;
    let added = merge_results(&results, &records)?;
    Ok((added, total - added))
}

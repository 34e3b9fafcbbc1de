//! The `actprobe` command line.
//!
//! Every subcommand reads and writes under `--out-dir` and skips work that is
//! already there, so a pipeline can be stopped and rerun at any point:
//!
//! ```text
//! actprobe train  --profile desk --activation both
//! actprobe sweep  --profile desk --family all
//! actprobe stats
//! actprobe report
//! ```
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::experiment::{self, Dataset, Profile, Split, SweepSpec, BASELINES_FILE, RESULTS_FILE};
use crate::feature_demo::{self, FeatureMixture, Stage};
use crate::fetch;
use crate::model::ActivationKind;
use crate::perturb::{ProbeFamily, ProbeOptions};
use crate::report::{self, ChartSpec};
use crate::stats;

pub const STATS_FILE: &str = "stats.csv";

#[derive(Debug, Parser)]
#[command(name = "actprobe", version, about = "Train small MNIST perceptrons and probe their hidden units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download a file and keep it only if its SHA-256 matches
    Fetch(FetchArgs),
    /// Train baseline models for each activation and seed
    Train(TrainArgs),
    /// Recompute per-unit range sidecars for existing checkpoints
    Ranges(RangesArgs),
    /// Evaluate probe grids against trained checkpoints
    Sweep(SweepArgs),
    /// Summarise sweep results into means, intervals and paired t-tests
    Stats(StatsArgs),
    /// Render tables and charts from the stats file
    Report(ReportArgs),
    /// Run the one-dimensional feature selection demo
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Desk => Profile::Desk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Abs,
    Both,
}

impl ActivationArg {
    fn kinds(self) -> Vec<ActivationKind> {
        match self {
            ActivationArg::Relu => vec![ActivationKind::Relu],
            ActivationArg::Abs => vec![ActivationKind::Abs],
            ActivationArg::Both => ActivationKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Offset,
    Scale,
    Cutoff,
    All,
}

impl FamilyArg {
    fn families(self) -> Vec<ProbeFamily> {
        match self {
            FamilyArg::Offset => vec![ProbeFamily::Offset],
            FamilyArg::Scale => vec![ProbeFamily::Scale],
            FamilyArg::Cutoff => vec![ProbeFamily::Cutoff],
            FamilyArg::All => ProbeFamily::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    Pre,
    Post,
    Both,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

fn parse_seed_list_arg(s: &str) -> Result<SeedList, String> {
    parse_seed_list(s).map(SeedList)
}

fn parse_grid_arg(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid)
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("seed {t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err("seeds must be distinct".into());
    }
    Ok(seeds)
}

/// Percent list such as `-25,0,25` or `1%,50%`, returned as fractions.
fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let mut grid: Vec<f64> = s
        .split(',')
        .map(|t| {
            let t = t.trim().trim_end_matches('%');
            t.parse::<f64>().map(|v| v / 100.0).map_err(|e| format!("percent {t:?}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Args)]
struct Common {
    /// Training and sweep settings
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    #[arg(long, value_enum, default_value = "both")]
    activation: ActivationArg,
    /// Comma-separated seeds; defaults to the profile's seeds
    #[arg(long, value_parser = parse_seed_list_arg)]
    seed_list: Option<SeedList>,
    #[arg(long, default_value = "data/mnist-10k")]
    data_dir: PathBuf,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

impl Common {
    fn profile(&self) -> Profile {
        self.profile.into()
    }

    fn seeds(&self) -> Vec<u64> {
        self.seed_list.clone().map_or_else(|| self.profile().seeds(), |s| s.0)
    }

    fn dataset(&self, subset: Option<usize>) -> Result<Dataset> {
        let subset = subset.or(self.profile().subset());
        Dataset::load(&self.data_dir, subset).with_context(|| format!("loading {}", self.data_dir.display()))
    }
}

#[derive(Debug, Args)]
struct FetchArgs {
    #[arg(long)]
    url: String,
    /// Expected SHA-256 of the download, hex
    #[arg(long)]
    sha256: String,
    /// Destination file; defaults to the URL's file name under --out-dir
    #[arg(long)]
    dest: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Override the profile's epoch count
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the profile's hidden width
    #[arg(long)]
    hidden: Option<usize>,
    /// Override the profile's learning rate
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Use only the first N training images
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Debug, Args)]
struct RangesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Debug, Args)]
struct ProbeFlags {
    /// Offset probe uses scale = (1 - p)·r instead of 1 - p
    #[arg(long)]
    compat_literal_offset: bool,
    /// Cutoff probe clips at p·max instead of p·range
    #[arg(long)]
    compat_cutoff_max: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    probe: ProbeFlags,
    #[arg(long, value_enum, default_value = "all")]
    family: FamilyArg,
    /// Comma-separated percents; defaults to each family's standard grid
    #[arg(long, value_parser = parse_grid_arg)]
    grid: Option<Grid>,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Scenario file; without it both activations run on the standard mixture
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageArg,
    #[arg(long, default_value = "runs/demo")]
    out_dir: PathBuf,
}

/// Runs the command line in `args` (program name first) and returns the
/// process exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    eprintln!("\n{}", synopsis());
                    1
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn synopsis() -> String {
    use clap::CommandFactory;
    Cli::command().render_usage().to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fetch(a) => cmd_fetch(a),
        Command::Train(a) => cmd_train(a),
        Command::Ranges(a) => cmd_ranges(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn cmd_fetch(a: FetchArgs) -> Result<()> {
    let dest = match a.dest {
        Some(d) => d,
        None => {
            let name = a.url.rsplit('/').next().filter(|n| !n.is_empty()).context("URL has no file name")?;
            a.out_dir.join(name)
        }
    };
    let path = fetch::fetch_dataset(&a.url, &a.sha256, &dest)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let c = &a.common;
    let mut config = c.profile().train_config();
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(h) = a.hidden {
        config.hidden = h;
    }
    if let Some(lr) = a.learning_rate {
        config.learning_rate = lr;
    }
    let data = c.dataset(a.subset)?;
    let records = experiment::run_baselines(&config, &c.seeds(), &c.activation.kinds(), &data, &c.out_dir)?;
    experiment::merge_baselines(&c.out_dir.join(BASELINES_FILE), &records)?;
    for r in &records {
        let test = r.test_accuracy.map(|t| format!(" test {:.2}%", 100.0 * t)).unwrap_or_default();
        println!(
            "{} seed {}: train {:.2}%{test} loss {:.4}",
            r.activation.label(),
            r.seed,
            100.0 * r.train_accuracy,
            r.final_loss
        );
    }
    Ok(())
}

fn cmd_ranges(a: RangesArgs) -> Result<()> {
    let c = &a.common;
    let data = c.dataset(a.subset)?;
    for path in experiment::find_checkpoints(&c.out_dir, &c.activation.kinds(), &c.seeds())? {
        let ranges = experiment::write_sidecar(&path, &data)?;
        let zero = ranges.nodes().iter().filter(|n| n.range() <= 0.0).count();
        println!("{}: {} units, {zero} with zero range", path.display(), ranges.len());
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let c = &a.common;
    let data = c.dataset(a.subset)?;
    let options = ProbeOptions {
        literal_offset: a.probe.compat_literal_offset,
        cutoff_of_max: a.probe.compat_cutoff_max,
    };
    let grids = experiment::default_grids();
    for family in a.family.families() {
        let grid = a.grid.clone().map_or_else(|| grids[&family].clone(), |g| g.0);
        let spec = SweepSpec::new(family, grid, c.seeds(), a.split.into())?;
        let (added, skipped) = experiment::sweep_into(&c.out_dir, &spec, &c.activation.kinds(), &data, options)?;
        println!("{family}: {added} new records, {skipped} already present");
    }
    Ok(())
}

fn read_stats(path: &Path) -> Result<Vec<stats::StatRow>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(stats::read_stats_csv(f)?)
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let split: Split = a.split.into();
    let results = experiment::load_results(&a.out_dir.join(RESULTS_FILE))?;
    if results.is_empty() {
        bail!("no results in {}", a.out_dir.join(RESULTS_FILE).display());
    }
    let results: Vec<_> = results.into_iter().filter(|r| r.split == split).collect();
    let baselines = experiment::load_baselines(&a.out_dir.join(BASELINES_FILE))?;
    let rows = stats::aggregate(&results, &baselines)?;
    let mut buf = Vec::new();
    stats::write_stats_csv(&mut buf, &rows)?;
    let path = a.out_dir.join(STATS_FILE);
    crate::fetch::write_atomically(&path, &buf)?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

/// Writes `table_{family}.csv`, `table_{family}.txt` and `chart_{family}.svg`
/// for every family present in the stats file.
pub fn write_report(out_dir: &Path, rows: &[stats::StatRow]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for family in ProbeFamily::ALL {
        let mine: Vec<_> = rows.iter().filter(|r| r.family == family).cloned().collect();
        if mine.is_empty() {
            continue;
        }
        let table = report::emit_table(&mine, family)?;
        let title = format!("Accuracy under {family} probes");
        let chart = report::emit_chart(&ChartSpec::from_stats(&mine, family, &title)?)?;
        for (name, body) in [
            (format!("table_{family}.csv"), table.csv),
            (format!("table_{family}.txt"), table.text),
            (format!("chart_{family}.svg"), chart),
        ] {
            let path = out_dir.join(name);
            crate::fetch::write_atomically(&path, body.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let rows = read_stats(&a.out_dir.join(STATS_FILE))?;
    for path in write_report(&a.out_dir, &rows)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let runs: Vec<(FeatureMixture, ActivationKind, Vec<f64>)> = match &a.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let s = feature_demo::parse_scenario(&text)?;
            vec![(s.mixture, s.activation, s.deltas)]
        }
        None => ActivationKind::ALL
            .iter()
            .map(|&act| (FeatureMixture::canonical(act), act, vec![-1.0, -0.5, 0.0, 0.5, 1.0]))
            .collect(),
    };
    let stages = match a.stage {
        StageArg::Pre => vec![Stage::Pre],
        StageArg::Post => vec![Stage::Post],
        StageArg::Both => vec![Stage::Pre, Stage::Post],
    };
    let mut summary = String::new();
    for (mix, act, deltas) in &runs {
        for (delta, sel) in feature_demo::offset_experiment(mix, *act, deltas) {
            let flag = if sel.misaligned { " (tie: boundary between features)" } else { "" };
            summary.push_str(&format!(
                "{} boundary {:+} -> {{{}}}{flag}\n",
                act.label(),
                mix.boundary + delta,
                sel.labels.iter().map(char::to_string).collect::<Vec<_>>().join(",")
            ));
        }
        for &stage in &stages {
            let name = match stage {
                Stage::Pre => format!("demo_{}_pre.svg", act.as_str()),
                Stage::Post => format!("demo_{}_post.svg", act.as_str()),
            };
            let svg = feature_demo::emit_demo_svg(mix, *act, stage);
            crate::fetch::write_atomically(&a.out_dir.join(name), svg.as_bytes())?;
        }
    }
    crate::fetch::write_atomically(&a.out_dir.join("selections.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

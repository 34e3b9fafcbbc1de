//! Trains a small pair of models and sweeps all three probe families over
//! them, printing accuracy per percent.
//!
//! ```text
//! cargo run --release --example probe_sweep
//! ```

use std::path::Path;

use actprobe::experiment::{self, Dataset, Split, SweepSpec};
use actprobe::model::{ActivationKind, TrainConfig};
use actprobe::perturb::{ProbeFamily, ProbeOptions};
use actprobe::report::format_percent;

fn main() -> anyhow::Result<()> {
    let data = Dataset::load(Path::new("data/mnist-10k"), Some(2000))?;
    let out = tempfile::tempdir()?;
    let config = TrainConfig { epochs: 150, learning_rate: 0.1, hidden: 32, seed: 1 };
    let seeds = [1];
    let baselines = experiment::run_baselines(&config, &seeds, &ActivationKind::ALL, &data, out.path())?;
    for b in &baselines {
        println!("{} baseline {:.2}%", b.activation.label(), 100.0 * b.train_accuracy);
    }

    let checkpoints = experiment::find_checkpoints(out.path(), &ActivationKind::ALL, &seeds)?;
    let grids = experiment::default_grids();
    for family in ProbeFamily::ALL {
        let spec = SweepSpec::new(family, grids[&family].clone(), seeds.to_vec(), Split::Train)?;
        let records = experiment::run_sweep(&spec, &checkpoints, &data, ProbeOptions::default())?;
        println!("\n{family}");
        for &p in &spec.grid {
            let acc = |a| records.iter().find(|r| r.activation == a && r.percent == p).map_or(f64::NAN, |r| r.accuracy);
            println!(
                "  {:>6}  ReLU {:6.2}%  Abs {:6.2}%",
                format_percent(p, family == ProbeFamily::Offset),
                100.0 * acc(ActivationKind::Relu),
                100.0 * acc(ActivationKind::Abs)
            );
        }
    }
    Ok(())
}

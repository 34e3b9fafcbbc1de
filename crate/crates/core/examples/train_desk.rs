//! Trains one ReLU and one Abs network and compares them.
//!
//! Defaults are small enough to finish in about a minute; pass
//! `epochs hidden subset` to change them.
//!
//! ```text
//! cargo run --release --example train_desk -- 200 64 2000
//! ```

use std::path::Path;

use actprobe::experiment::Dataset;
use actprobe::model::{self, ActivationKind, TrainConfig};
use actprobe::perturb::PerturbationConfig;

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let epochs = args.first().copied().unwrap_or(200);
    let hidden = args.get(1).copied().unwrap_or(64);
    let subset = args.get(2).copied().unwrap_or(2000);

    let data = Dataset::load(Path::new("data/mnist-10k"), Some(subset))?;
    let config = TrainConfig { epochs, learning_rate: 0.1, hidden, seed: 1 };

    for act in ActivationKind::ALL {
        let mut curve = Vec::new();
        let params = model::train(&config, &data.train.x, &data.train.y, act, &mut |epoch, loss| {
            if epoch % (epochs / 5).max(1) == 0 {
                curve.push(format!("{epoch}:{loss:.3}"));
            }
        })?;
        let acc = model::evaluate(&params, &data.train.x, &data.train.y, &PerturbationConfig::identity(hidden))?;
        println!("{:>4}  loss {}  train accuracy {:.2}%", act.label(), curve.join(" "), 100.0 * acc);
    }
    Ok(())
}

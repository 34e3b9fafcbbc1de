//! Paired t-tests and a formatted table from hand-made sweep records.

use actprobe::experiment::{BaselineRecord, RunRecord, Split};
use actprobe::model::ActivationKind;
use actprobe::perturb::ProbeFamily;
use actprobe::report::emit_table;
use actprobe::stats;

fn main() -> anyhow::Result<()> {
    let t = stats::paired_t_test(&[0.90, 0.92, 0.89, 0.93, 0.91], &[0.95, 0.96, 0.94, 0.97, 0.95])?;
    println!("paired t = {:.3}, p = {:.3e}, df = {}", t.t, t.p, t.df);
    println!("t*(0.975, 19) = {:.4}", stats::t_quantile(0.975, 19)?);

    // accuracy falls off as the offset grows, faster for Abs
    let base = |a| if a == ActivationKind::Abs { 0.999 } else { 0.983 };
    let mut baselines = Vec::new();
    let mut records = Vec::new();
    for activation in ActivationKind::ALL {
        for seed in 1..=5u64 {
            let jitter = seed as f64 * 1e-3;
            baselines.push(BaselineRecord {
                activation,
                seed,
                train_accuracy: base(activation) - jitter,
                test_accuracy: None,
                final_loss: 0.05,
            });
            for percent in [-0.25f64, -0.05, 0.0, 0.05, 0.25] {
                let slope = if activation == ActivationKind::Abs { 1.8 } else { 0.6 };
                let wobble = if percent == 0.0 { 0.0 } else { 0.004 * ((seed * 7 + (percent * 100.0).abs() as u64) % 3) as f64 };
                let accuracy = base(activation) - jitter - slope * f64::abs(percent) * (1.0 + 0.1 * seed as f64) - wobble;
                records.push(RunRecord { activation, family: ProbeFamily::Offset, percent, seed, split: Split::Train, accuracy });
            }
        }
    }
    let rows = stats::aggregate(&records, &baselines)?;
    print!("\n{}", emit_table(&rows, ProbeFamily::Offset)?.text);
    Ok(())
}

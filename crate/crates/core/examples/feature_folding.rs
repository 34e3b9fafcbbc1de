//! One-dimensional picture of what a unit selects: a mixture of five
//! features, a boundary, and ReLU or Abs applied after the boundary shift.

use actprobe::feature_demo::{emit_demo_svg, offset_experiment, post_activation_means, FeatureMixture, Stage};
use actprobe::model::ActivationKind;

fn main() -> anyhow::Result<()> {
    for act in ActivationKind::ALL {
        let mix = FeatureMixture::canonical(act);
        println!("{} with boundary {}", act.label(), mix.boundary);
        for (label, m) in post_activation_means(&mix, act) {
            println!("  E[{label}] = {m:.4}");
        }
        for (delta, sel) in offset_experiment(&mix, act, &[-1.0, -0.5, 0.0, 0.5, 1.0]) {
            let note = if sel.misaligned { "  boundary between features" } else { "" };
            println!("  delta {delta:+.1}: {{{}}}{note}", sel.label_string());
        }
        for stage in [Stage::Pre, Stage::Post] {
            let name = format!("folding_{}_{:?}.svg", act.as_str(), stage).to_lowercase();
            std::fs::write(&name, emit_demo_svg(&mix, act, stage))?;
            println!("  wrote {name}");
        }
    }
    Ok(())
}

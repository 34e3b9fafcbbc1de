//! Renders an accuracy-vs-percent chart with 95% bands to an SVG file.
//!
//! ```text
//! cargo run --example perturbation_chart -- chart.svg
//! ```

use actprobe::report::{emit_chart, ChartSpec, Series};

fn band(label: &str, mean: &[f64], half: f64) -> Series {
    Series {
        label: label.into(),
        mean: mean.to_vec(),
        lower: mean.iter().map(|m| m - half).collect(),
        upper: mean.iter().map(|m| m + half).collect(),
    }
}

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "chart.svg".into());
    let spec = ChartSpec {
        title: "Accuracy under cutoff probes".into(),
        x_label: "cutoff (%)".into(),
        y_label: "Accuracy (%)".into(),
        x: vec![1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 100.0],
        series: vec![
            band("Abs", &[52.9, 80.1, 91.0, 97.5, 99.6, 99.9, 99.99], 1.5),
            band("ReLU", &[75.9, 88.2, 93.4, 96.8, 98.0, 98.3, 98.33], 0.8),
        ],
        width: 720,
        height: 440,
    };
    let svg = emit_chart(&spec)?;
    std::fs::write(&path, &svg)?;
    println!("wrote {path} ({} bytes)", svg.len());
    Ok(())
}

//! Reads an IDX image/label pair and prints a digit as ASCII art.
//!
//! ```text
//! cargo run --example parse_idx -- data/mnist-10k 0
//! ```

use std::path::PathBuf;

use actprobe::idx::{self, NormalizationParams};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist-10k".into()));
    let which: usize = args.next().map_or(Ok(0), |s| s.parse())?;

    let images = idx::read_idx_images(&dir.join("train-images-idx3-ubyte.gz"))?;
    let labels = idx::read_idx_labels(&dir.join("train-labels-idx1-ubyte.gz"))?;
    println!("{} images of {}x{}, {} labels", images.count, images.rows, images.cols, labels.len());

    let mut counts = [0usize; idx::NUM_CLASSES];
    for &l in &labels.labels {
        counts[l as usize] += 1;
    }
    println!("per class: {counts:?}");

    println!("image {which}, label {}:", labels.labels[which]);
    for row in images.image(which).chunks(images.cols) {
        let line: String = row.iter().map(|&p| match p { 0..=63 => ' ', 64..=127 => '.', 128..=191 => '+', _ => '#' }).collect();
        println!("  {line}");
    }

    let x = idx::normalize(&images, NormalizationParams::MNIST);
    let mean = x.as_slice().iter().sum::<f64>() / x.as_slice().len() as f64;
    println!("design matrix {:?}, mean after normalization {mean:.4}", x.shape());
    Ok(())
}

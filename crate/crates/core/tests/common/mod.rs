#![allow(dead_code)]

use std::path::Path;

use actprobe::idx::{ImageSet, LabelSet};
use actprobe::numerics::Rng;

/// Small digit-like images: each class lights up its own band of rows, on
/// top of sparse noise. Easy enough to learn in a few dozen epochs.
pub fn synthetic_images(n: usize, side: usize, seed: u64) -> (ImageSet, LabelSet) {
    let mut rng = Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    let band = (side / 10).max(1);
    for i in 0..n {
        let y = (i % 10) as u8;
        labels.push(y);
        for r in 0..side {
            for _ in 0..side {
                let lit = r / band == y as usize && rng.next_f64() < 0.7;
                let noise = rng.next_f64() < 0.05;
                let v = if lit {
                    160 + (rng.next_u64() % 96) as u8
                } else if noise {
                    (rng.next_u64() % 128) as u8
                } else {
                    0
                };
                pixels.push(v);
            }
        }
    }
    (ImageSet { count: n, rows: side, cols: side, pixels }, LabelSet::new(labels).unwrap())
}

/// Writes `train-*` IDX files (and `t10k-*` when `test` is non-zero).
pub fn write_dataset(dir: &Path, train: usize, test: usize, side: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let (im, lb) = synthetic_images(train, side, 11);
    std::fs::write(dir.join("train-images-idx3-ubyte"), im.to_idx_bytes()).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), lb.to_idx_bytes()).unwrap();
    if test > 0 {
        let (im, lb) = synthetic_images(test, side, 12);
        std::fs::write(dir.join("t10k-images-idx3-ubyte"), im.to_idx_bytes()).unwrap();
        std::fs::write(dir.join("t10k-labels-idx1-ubyte"), lb.to_idx_bytes()).unwrap();
    }
}

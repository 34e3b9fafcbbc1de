//! Downloads a file and keeps it only if its SHA-256 matches.
//!
//! ```text
//! cargo run --example fetch_dataset -- <url> <sha256> <dest>
//! ```

use std::path::PathBuf;

use actprobe::fetch::{fetch_dataset, FetchError};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [url, digest, dest] = &args[..] else {
        eprintln!("usage: fetch_dataset <url> <sha256> <dest>");
        std::process::exit(1);
    };
    match fetch_dataset(url, digest, &PathBuf::from(dest)) {
        Ok(path) => println!("verified {}", path.display()),
        Err(FetchError::DigestMismatch { actual, .. }) => {
            eprintln!("digest mismatch, got {actual}; nothing written");
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}

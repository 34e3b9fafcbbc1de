//! Optional dataset download, gated on a SHA-256 digest.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

const MAX_DOWNLOAD_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("expected a 64-character hex SHA-256 digest, got {0:?}")]
    BadDigest(String),
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("digest mismatch for {url}: expected {expected}, got {actual}")]
    DigestMismatch { url: String, expected: String, actual: String },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_digest(hex_digest: &str) -> Result<String, FetchError> {
    let lower = hex_digest.trim().to_ascii_lowercase();
    if lower.len() != 64 || !lower.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(FetchError::BadDigest(hex_digest.to_string()));
    }
    Ok(lower)
}

/// Downloads `url` and writes it to `dest` only when its SHA-256 matches
/// `expected_digest`. On mismatch nothing is written.
pub fn fetch_dataset(url: &str, expected_digest: &str, dest: &Path) -> Result<PathBuf, FetchError> {
    let expected = parse_digest(expected_digest)?;
    let network = |message: String| FetchError::Network { url: url.to_string(), message };

    let mut response = ureq::get(url).call().map_err(|e| network(e.to_string()))?;
    let bytes = response
        .body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD_BYTES)
        .read_to_vec()
        .map_err(|e| network(e.to_string()))?;

    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(FetchError::DigestMismatch { url: url.to_string(), expected, actual });
    }
    write_atomically(dest, &bytes)?;
    Ok(dest.to_path_buf())
}

pub(crate) fn write_atomically(dest: &Path, bytes: &[u8]) -> Result<(), FetchError> {
    let io = |source| FetchError::Io { path: dest.to_path_buf(), source };
    let dir = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = dest.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io)?;
    std::fs::rename(&tmp, dest).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_format_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let err = fetch_dataset("http://127.0.0.1:9/x", "abc", &dir.path().join("x")).unwrap_err();
        assert!(matches!(err, FetchError::BadDigest(_)));
    }

    #[test]
    fn known_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

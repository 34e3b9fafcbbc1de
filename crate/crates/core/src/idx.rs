//! MNIST IDX containers and input normalization.
//!
//! ```text
//! images: magic 0x00000803, count, rows, cols (u32 big-endian), then count·rows·cols bytes
//! labels: magic 0x00000801, count (u32 big-endian), then count bytes in 0..=9
//! ```
//!
//! Either stream may be gzip-wrapped; the `1f 8b` magic is detected and the
//! payload inflated before parsing.

use std::borrow::Cow;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::numerics::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
/// Default cap on declared element counts.
pub const DEFAULT_DIMENSION_CAP: u64 = 100_000_000;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX stream truncated: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("IDX header declares {declared} elements, above the cap of {cap}")]
    DimensionOverflow { declared: u64, cap: u64 },
    #[error("label {value} at index {index} is not a digit class")]
    InvalidLabel { index: usize, value: u8 },
    #[error("image and label counts differ: {images} vs {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("gzip decode failed: {0}")]
    Gzip(#[source] std::io::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `count·rows·cols` bytes.
    pub pixels: Vec<u8>,
}

impl ImageSet {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.pixels_per_image();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// First `n` images.
    pub fn truncate(&mut self, n: usize) {
        self.count = self.count.min(n);
        self.pixels.truncate(self.count * self.pixels_per_image());
    }

    /// Uncompressed IDX encoding.
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IMAGE_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub labels: Vec<u8>,
}

impl LabelSet {
    pub fn new(labels: Vec<u8>) -> Result<Self, IdxError> {
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(IdxError::InvalidLabel { index, value });
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.labels.truncate(n);
    }

    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

/// Pixel-fraction normalization: `(pixel/255 − mu) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalizationParams {
    pub const MNIST: NormalizationParams = NormalizationParams { mu: 0.1307, sigma: 0.3081 };
    pub const IDENTITY: NormalizationParams = NormalizationParams { mu: 0.0, sigma: 1.0 };
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self::MNIST
    }
}

/// `n×784` model inputs, one normalized image per row.
pub type DesignMatrix = Matrix;

fn maybe_gunzip(bytes: &[u8]) -> Result<Cow<'_, [u8]>, IdxError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out).map_err(IdxError::Gzip)?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

struct Header<'a> {
    dims: Vec<u32>,
    payload: &'a [u8],
}

fn read_header<'a>(bytes: &'a [u8], magic: u32, ndims: usize) -> Result<Header<'a>, IdxError> {
    let header_len = 4 * (1 + ndims);
    if bytes.len() < 4 {
        return Err(IdxError::Truncated { needed: header_len as u64, available: bytes.len() as u64 });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(IdxError::BadMagic { expected: magic, found });
    }
    if bytes.len() < header_len {
        return Err(IdxError::Truncated { needed: header_len as u64, available: bytes.len() as u64 });
    }
    let dims = (1..=ndims).map(word).collect();
    Ok(Header { dims, payload: &bytes[header_len..] })
}

fn checked_payload(dims: &[u32], available: usize, cap: u64) -> Result<usize, IdxError> {
    let declared = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)))
        .unwrap_or(u64::MAX);
    if declared > cap {
        return Err(IdxError::DimensionOverflow { declared, cap });
    }
    if (available as u64) < declared {
        return Err(IdxError::Truncated { needed: declared, available: available as u64 });
    }
    Ok(declared as usize)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet, IdxError> {
    parse_idx_images_capped(bytes, DEFAULT_DIMENSION_CAP)
}

pub fn parse_idx_images_capped(bytes: &[u8], cap: u64) -> Result<ImageSet, IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    let header = read_header(&bytes, IMAGE_MAGIC, 3)?;
    let len = checked_payload(&header.dims, header.payload.len(), cap)?;
    Ok(ImageSet {
        count: header.dims[0] as usize,
        rows: header.dims[1] as usize,
        cols: header.dims[2] as usize,
        pixels: header.payload[..len].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<LabelSet, IdxError> {
    parse_idx_labels_capped(bytes, DEFAULT_DIMENSION_CAP)
}

pub fn parse_idx_labels_capped(bytes: &[u8], cap: u64) -> Result<LabelSet, IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    let header = read_header(&bytes, LABEL_MAGIC, 1)?;
    let len = checked_payload(&header.dims, header.payload.len(), cap)?;
    LabelSet::new(header.payload[..len].to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

pub fn read_idx_images(path: &Path) -> Result<ImageSet, IdxError> {
    parse_idx_images(&read_file(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<LabelSet, IdxError> {
    parse_idx_labels(&read_file(path)?)
}

/// Each output value is `(pixel/255 − mu)/sigma`.
pub fn normalize(images: &ImageSet, params: NormalizationParams) -> DesignMatrix {
    assert!(params.sigma > 0.0, "normalization sigma must be positive");
    let data = images
        .pixels
        .iter()
        .map(|&p| (f64::from(p) / 255.0 - params.mu) / params.sigma)
        .collect();
    Matrix::from_vec(images.count, images.pixels_per_image(), data).expect("pixel buffer matches header")
}

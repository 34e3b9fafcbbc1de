//! Binary model checkpoints.
//!
//! ```text
//! "APM1"            4 bytes
//! version           u16 LE (1)
//! activation        u8 (0 = ReLU, 1 = Abs)
//! hidden H          u32 LE
//! seed              u64 LE
//! mu, sigma         f64 LE
//! w1 (H×d), b1 (H), w2 (10×H), b2 (10)   f32 LE, row-major
//! ```
//!
//! The input width `d` is not stored; it follows from the payload length.

use std::path::Path;

use thiserror::Error;

use crate::idx::{NormalizationParams, NUM_CLASSES};
use crate::model::{ActivationKind, ModelParams};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"APM1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("unknown activation code {0}")]
    Activation(u8),
    #[error("checkpoint payload of {floats} floats does not fit hidden width {hidden}")]
    Layout { floats: usize, hidden: usize },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("io on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub normalization: NormalizationParams,
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let h = p.hidden();
        let floats = h * p.input_dim() + h + NUM_CLASSES * h + NUM_CLASSES;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(p.activation.code());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.normalization.mu.to_le_bytes());
        out.extend_from_slice(&self.normalization.sigma.to_le_bytes());
        push_f32s(&mut out, p.w1.as_slice());
        push_f32s(&mut out, &p.b1);
        push_f32s(&mut out, p.w2.as_slice());
        push_f32s(&mut out, &p.b2);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated);
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let activation = ActivationKind::from_code(bytes[6]).ok_or(CheckpointError::Activation(bytes[6]))?;
        let hidden = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
        let mu = f64::from_le_bytes(bytes[19..27].try_into().unwrap());
        let sigma = f64::from_le_bytes(bytes[27..35].try_into().unwrap());

        let payload = &bytes[HEADER_LEN..];
        if !payload.len().is_multiple_of(4) {
            return Err(CheckpointError::Truncated);
        }
        let floats = payload.len() / 4;
        let fixed = hidden * (1 + NUM_CLASSES) + NUM_CLASSES;
        let layout = CheckpointError::Layout { floats, hidden };
        if hidden == 0 || floats <= fixed || !(floats - fixed).is_multiple_of(hidden) {
            return Err(layout);
        }
        let input_dim = (floats - fixed) / hidden;

        let mut values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        let w1 = Matrix::from_vec(hidden, input_dim, take(hidden * input_dim)).unwrap();
        let b1 = take(hidden);
        let w2 = Matrix::from_vec(NUM_CLASSES, hidden, take(NUM_CLASSES * hidden)).unwrap();
        let b2 = take(NUM_CLASSES);
        Ok(Self {
            params: ModelParams { w1, b1, w2, b2, activation },
            seed,
            normalization: NormalizationParams { mu, sigma },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::fetch::write_atomically(path, &self.to_bytes()).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn sample(input_dim: usize, hidden: usize) -> Checkpoint {
        let mut rng = Rng::seed_from_u64(5);
        let params = ModelParams::init(&mut rng, input_dim, hidden, ActivationKind::Abs).quantized_f32();
        Checkpoint { params, seed: 0xDEAD_BEEF, normalization: NormalizationParams::MNIST }
    }

    #[test]
    fn header_layout() {
        let bytes = sample(784, 3).to_bytes();
        assert_eq!(&bytes[0..4], b"APM1");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..11], &[3, 0, 0, 0]);
        assert_eq!(u64::from_le_bytes(bytes[11..19].try_into().unwrap()), 0xDEAD_BEEF);
        assert_eq!(f64::from_le_bytes(bytes[19..27].try_into().unwrap()), 0.1307);
        assert_eq!(f64::from_le_bytes(bytes[27..35].try_into().unwrap()), 0.3081);
        assert_eq!(bytes.len(), 35 + 4 * (3 * 784 + 3 + 30 + 10));
    }

    #[test]
    fn quantized_params_round_trip_exactly() {
        for (d, h) in [(784, 4), (5, 1), (3, 11)] {
            let ck = sample(d, h);
            assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = sample(784, 2).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..20]), Err(CheckpointError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[6] = 7;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Activation(7))));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }
}

//! Speaker encoders: MHFA over upstream layers, the STFT-BLSTM baseline, and
//! the AM-softmax head used by the verification benchmark.

mod am_softmax;
mod blstm_enc;
mod mhfa;

pub use am_softmax::am_softmax_loss;
pub use blstm_enc::StftSpeakerEncoder;
pub use mhfa::{mhfa_attention, mhfa_embed, Mhfa};

use crate::error::{Error, Result};

/// Fixed-dimension conditioning vector `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("speaker embedding must be non-empty and finite".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; errors on a zero-norm side.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!("embedding dims {} vs {}", self.dim(), other.dim())));
        }
        let (a, b) = (self.norm(), other.norm());
        if a == 0.0 || b == 0.0 {
            return Err(Error::Normalization("zero-norm embedding".into()));
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum();
        Ok((dot / (a * b)).clamp(-1.0, 1.0))
    }
}

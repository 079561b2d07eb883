//! Waveform I/O, min-mode mixture simulation, synthetic speakers and
//! dataset manifests.

mod dataset;
mod mix;
mod synth;
mod wav;

pub use dataset::{
    build_dataset, build_sv_corpus, load_manifest, write_manifest, DatasetSpec, MixtureRecord,
    SplitCounts, SvCorpusSpec, SvUtterance,
};
pub use mix::{mix_min, MixResult};
pub use synth::{synth_utterance, SpeakerProfile};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono 16 kHz waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Length("audio signal must contain at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len.max(1)],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn rms(&self) -> f64 {
        (self.energy() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// First `len` samples (or the whole signal when shorter).
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.clamp(1, self.samples.len());
        Self {
            samples: self.samples[..len].to_vec(),
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples.len() {
            return Err(Error::Length(format!(
                "slice [{start}, {}) outside signal of length {}",
                start + len,
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..start + len].to_vec(),
        })
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
        }
    }
}

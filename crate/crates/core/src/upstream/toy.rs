use std::f64::consts::PI;

use ndarray::{s, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use super::FeatureStack;
use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::frontend::{stft_frame_count, HOP};
use crate::nn::Mat;

const ANALYSIS: usize = 512;
const BANDS: usize = 128;
const CONTEXT: usize = 3;
const MIN_LENGTH: usize = 1024;

/// Deterministic stand-in for a pretrained speech model: a fixed random
/// strided filterbank (layer 0) followed by `L` frozen random mixing layers.
/// Nothing here is ever trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyUpstream {
    pub seed: u64,
    pub layers: usize,
    pub dim: usize,
    /// `ANALYSIS x 2*BANDS` quadrature filter pairs.
    filters: Mat,
    /// `BANDS x D`
    proj0: Mat,
    /// per layer: frame-local map, `CONTEXT` temporal taps, bias
    local: Vec<Mat>,
    context: Vec<Vec<Mat>>,
    bias: Vec<Mat>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let n = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
}

impl ToyUpstream {
    pub fn new(seed: u64, layers: usize, dim: usize) -> Result<Self> {
        if layers == 0 || dim == 0 {
            return Err(Error::Config(format!("toy upstream needs L >= 1 and D >= 1, got L={layers} D={dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = crate::audio::SAMPLE_RATE as f64;
        let mut filters = Array2::zeros((ANALYSIS, 2 * BANDS));
        let (lo, hi) = (60.0f64.ln(), 7000.0f64.ln());
        for b in 0..BANDS {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let fc = (lo + (hi - lo) * (b as f64 + 0.5 + 0.3 * jitter.clamp(-1.5, 1.5)) / BANDS as f64).exp();
            let phase = 2.0 * PI * rand::Rng::gen::<f64>(&mut rng);
            for n in 0..ANALYSIS {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / ANALYSIS as f64).cos();
                let arg = 2.0 * PI * fc * n as f64 / fs + phase;
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                filters[[n, 2 * b]] = w * (arg.cos() + 0.05 * e1);
                filters[[n, 2 * b + 1]] = w * (arg.sin() + 0.05 * e2);
            }
        }
        let proj0 = gaussian(&mut rng, BANDS, dim, 1.0 / (BANDS as f64).sqrt());
        let mut local = Vec::with_capacity(layers);
        let mut context = Vec::with_capacity(layers);
        let mut bias = Vec::with_capacity(layers);
        for _ in 0..layers {
            local.push(gaussian(&mut rng, dim, dim, 0.8 / (dim as f64).sqrt()));
            context.push(
                (0..CONTEXT)
                    .map(|_| gaussian(&mut rng, dim, dim, 0.4 / ((CONTEXT * dim) as f64).sqrt()))
                    .collect(),
            );
            bias.push(gaussian(&mut rng, 1, dim, 0.1));
        }
        Ok(Self {
            seed,
            layers,
            dim,
            filters,
            proj0,
            local,
            context,
            bias,
        })
    }

    /// Frame count, identical to the STFT's centered framing: `ceil(len / 320)`.
    pub fn frame_count(length: usize) -> usize {
        stft_frame_count(length)
    }

    pub fn extract(&self, signal: &AudioSignal) -> Result<FeatureStack> {
        let x = signal.samples();
        if x.len() < MIN_LENGTH {
            return Err(Error::Length(format!(
                "toy upstream needs at least {MIN_LENGTH} samples, got {}",
                x.len()
            )));
        }
        let frames = Self::frame_count(x.len());
        let half = ANALYSIS / 2;
        // reflection padding so frame t is centered on sample 320 t
        let pad = |i: isize| -> f64 {
            let n = x.len() as isize;
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            x[j.clamp(0, n - 1) as usize]
        };
        let chunks = Array2::from_shape_fn((frames, ANALYSIS), |(t, k)| {
            pad((t * HOP) as isize - half as isize + k as isize)
        });
        let resp = chunks.dot(&self.filters);
        let bands = Array2::from_shape_fn((frames, BANDS), |(t, b)| {
            let (c, s) = (resp[[t, 2 * b]], resp[[t, 2 * b + 1]]);
            (1e-4 + (c * c + s * s).sqrt()).ln()
        });
        let mut out = Array3::<f32>::zeros((self.layers + 1, frames, self.dim));
        let mut h = standardize(bands.dot(&self.proj0));
        out.slice_mut(s![0, .., ..]).assign(&h.mapv(|v| v as f32));
        for l in 0..self.layers {
            let mut z = h.dot(&self.local[l]) + &self.bias[l];
            for (k, tap) in self.context[l].iter().enumerate() {
                let proj = h.dot(tap);
                let offset = k as isize - (CONTEXT as isize / 2);
                for t in 0..frames {
                    let src = t as isize + offset;
                    if src >= 0 && (src as usize) < frames {
                        let mut row = z.row_mut(t);
                        row += &proj.row(src as usize);
                    }
                }
            }
            h = standardize(z.mapv(f64::tanh));
            out.slice_mut(s![l + 1, .., ..]).assign(&h.mapv(|v| v as f32));
        }
        FeatureStack::new(out, HOP as u32, x.len() as u64)
    }

    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |m: &Mat| {
            for v in m.iter() {
                hasher.update(v.to_le_bytes());
            }
        };
        feed(&self.filters);
        feed(&self.proj0);
        for l in 0..self.layers {
            feed(&self.local[l]);
            self.context[l].iter().for_each(&mut feed);
            feed(&self.bias[l]);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Zero mean, unit variance over all values of one layer.
fn standardize(m: Mat) -> Mat {
    let n = m.len() as f64;
    let mean = m.sum() / n;
    let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    m.mapv(|v| (v - mean) / std)
}

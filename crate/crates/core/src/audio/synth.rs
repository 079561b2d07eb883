use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

const MAX_HARMONIC_HZ: f64 = 7000.0;
const PEAK: f64 = 0.9;

/// Identity of a synthetic talker: fixed f0 and three formant resonances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub formant_centers_hz: Vec<f64>,
    pub seed: u64,
}

impl SpeakerProfile {
    pub fn new(
        speaker_id: impl Into<String>,
        f0_hz: f64,
        formant_centers_hz: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if !(80.0..=300.0).contains(&f0_hz) {
            return Err(Error::Config(format!("f0 {f0_hz} Hz outside [80, 300]")));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if formant_centers_hz.is_empty()
            || formant_centers_hz.windows(2).any(|w| w[1] <= w[0])
            || formant_centers_hz.iter().any(|&f| f <= 0.0 || f >= nyquist)
        {
            return Err(Error::Config(format!(
                "formant centers {formant_centers_hz:?} must be strictly increasing in (0, {nyquist})"
            )));
        }
        Ok(Self {
            speaker_id: speaker_id.into(),
            f0_hz,
            formant_centers_hz,
            seed,
        })
    }

    /// Draws a random profile: f0 in [80, 300] Hz, F1/F2/F3 in disjoint ranges.
    pub fn random(speaker_id: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_0000_0001);
        let f0 = rng.gen_range(85.0..290.0);
        let f1 = rng.gen_range(300.0..900.0);
        let f2 = rng.gen_range(1000.0..2400.0);
        let f3 = rng.gen_range(2500.0..3500.0);
        Self::new(speaker_id, f0, vec![f1, f2, f3], seed).expect("ranges are valid")
    }
}

/// Deterministic voiced utterance for `profile`: harmonic excitation with slow
/// f0/amplitude modulation, cascaded through the formant resonators and
/// peak-normalized to 0.9.
pub fn synth_utterance(
    profile: &SpeakerProfile,
    duration_s: f64,
    utterance_seed: u64,
) -> Result<AudioSignal> {
    if !(duration_s >= 0.5) {
        return Err(Error::Length(format!("duration {duration_s} s below 0.5 s")));
    }
    let fs = SAMPLE_RATE as f64;
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(
        profile
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(utterance_seed.rotate_left(17))
            ^ utterance_seed,
    );

    let f0_rate1 = rng.gen_range(0.5..2.0);
    let f0_rate2 = rng.gen_range(2.0..5.0);
    let f0_depth1 = rng.gen_range(0.03..0.08);
    let f0_depth2 = rng.gen_range(0.01..0.04);
    let env_rate = rng.gen_range(2.5..5.0);
    let (ph1, ph2, ph3): (f64, f64, f64) = (
        rng.gen_range(0.0..2.0 * PI),
        rng.gen_range(0.0..2.0 * PI),
        rng.gen_range(0.0..2.0 * PI),
    );

    let mut theta: f64 = rng.gen_range(0.0..2.0 * PI);
    let mut excitation = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let f0 = profile.f0_hz
            * (1.0
                + f0_depth1 * (2.0 * PI * f0_rate1 * t + ph1).sin()
                + f0_depth2 * (2.0 * PI * f0_rate2 * t + ph2).sin());
        theta = (theta + 2.0 * PI * f0 / fs) % (2.0 * PI);
        let harmonics = (MAX_HARMONIC_HZ / f0).floor() as usize;
        // sin(k θ) by the Chebyshev recurrence
        let c2 = 2.0 * theta.cos();
        let (mut prev, mut cur) = (0.0, theta.sin());
        let mut sum = 0.0;
        for k in 1..=harmonics {
            sum += cur / k as f64;
            let next = c2 * cur - prev;
            prev = cur;
            cur = next;
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        let env = (0.5 * (1.0 + (2.0 * PI * env_rate * t + ph3).sin())).powf(1.5) + 0.05;
        excitation.push(env * (sum + 0.02 * noise));
    }

    let mut y = excitation;
    for &fc in &profile.formant_centers_hz {
        let bw = 60.0 + 0.06 * fc;
        let r = (-PI * bw / fs).exp();
        let a1 = 2.0 * r * (2.0 * PI * fc / fs).cos();
        let a2 = -r * r;
        let gain = 1.0 - r;
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let out = gain * *v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = out;
            *v = out;
        }
    }

    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        y.iter_mut().for_each(|v| *v *= g);
    }
    AudioSignal::new(y)
}

use super::AudioSignal;
use crate::error::{Error, Result};

const CLIP_LIMIT: f64 = 0.99;

/// Output of [`mix_min`]. `mixture == target + interference` holds exactly up
/// to floating-point rounding; `target` and `interference` are the stored
/// (truncated, gained and possibly rescaled) components.
#[derive(Debug, Clone)]
pub struct MixResult {
    pub mixture: AudioSignal,
    pub target: AudioSignal,
    pub interference: AudioSignal,
    /// Gain applied to the interference before the clipping rescale.
    pub interference_gain: f64,
    /// Common factor applied to every component (1.0 when no clipping risk).
    pub rescale: f64,
}

/// Min-mode two-source mixing at a requested target-to-interference ratio.
///
/// Both sources are truncated to the shorter length; the SNR is measured over
/// that span with full-signal energy. If the mixture peaks above 0.99 all
/// components are rescaled by one common factor.
pub fn mix_min(target: &AudioSignal, interference: &AudioSignal, snr_db: f64) -> Result<MixResult> {
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr_db must be finite, got {snr_db}")));
    }
    let len = target.len().min(interference.len());
    let t = &target.samples()[..len];
    let i = &interference.samples()[..len];
    let e_t: f64 = t.iter().map(|v| v * v).sum();
    let e_i: f64 = i.iter().map(|v| v * v).sum();
    if e_t <= 0.0 {
        return Err(Error::Degenerate("target is silent over the mixed span".into()));
    }
    if e_i <= 0.0 {
        return Err(Error::Degenerate("interference is silent over the mixed span".into()));
    }
    let gain = (e_t / (e_i * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut tgt: Vec<f64> = t.to_vec();
    let mut itf: Vec<f64> = i.iter().map(|v| v * gain).collect();
    let mut mix: Vec<f64> = tgt.iter().zip(&itf).map(|(a, b)| a + b).collect();

    let peak = mix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rescale = if peak > CLIP_LIMIT { CLIP_LIMIT / peak } else { 1.0 };
    if rescale != 1.0 {
        for v in tgt.iter_mut().chain(itf.iter_mut()) {
            *v *= rescale;
        }
        mix = tgt.iter().zip(&itf).map(|(a, b)| a + b).collect();
    }

    Ok(MixResult {
        mixture: AudioSignal::new(mix)?,
        target: AudioSignal::new(tgt)?,
        interference: AudioSignal::new(itf)?,
        interference_gain: gain,
        rescale,
    })
}

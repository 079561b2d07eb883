//! STFT analysis and overlap-add resynthesis of a synthetic utterance.

use tse::audio::{synth_utterance, SpeakerProfile};
use tse::frontend::{istft_decode, stft_encode, FFT_SIZE, HOP};

fn main() -> anyhow::Result<()> {
    let x = synth_utterance(&SpeakerProfile::random("spk", 1), 1.5, 0)?;
    let spec = stft_encode(&x)?;
    let y = istft_decode(&spec, x.len())?;
    let err: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
    println!(
        "{} samples -> {} frames x {} bins (fft {FFT_SIZE}, hop {HOP}); round trip SNR {:.1} dB",
        x.len(),
        spec.frames(),
        spec.re.ncols(),
        10.0 * (x.energy() / err).log10()
    );
    Ok(())
}

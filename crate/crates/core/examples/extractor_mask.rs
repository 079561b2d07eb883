//! Mask estimation on STFT magnitudes and application to the mixture.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tse::audio::{mix_min, synth_utterance, SpeakerProfile};
use tse::extractor::{estimate_mask, Extractor, FusionKind};
use tse::frontend::{apply_mask, istft_decode, stft_encode, DomainFeatures, MaskKind, N_BINS};
use tse::metrics::si_sdri;
use tse::nn::ParamStore;
use tse::speaker::SpeakerEmbedding;

fn main() -> anyhow::Result<()> {
    let t = synth_utterance(&SpeakerProfile::random("t", 1), 1.0, 0)?;
    let i = synth_utterance(&SpeakerProfile::random("i", 2), 1.0, 0)?;
    let m = mix_min(&t, &i, 0.0)?;
    let spec = stft_encode(&m.mixture)?;

    let ex = Extractor::new(N_BINS, 32, 16, FusionKind::Multiplication, MaskKind::Magnitude, N_BINS);
    let mut store = ParamStore::new();
    ex.init(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
    let e = SpeakerEmbedding::new(vec![0.1; 16])?;
    let mask = estimate_mask(&ex, &store, &spec.magnitude(), &e)?;
    let masked = match apply_mask(&DomainFeatures::Spectrogram(spec), &mask)? {
        DomainFeatures::Spectrogram(s) => s,
        DomainFeatures::Encoded(_) => unreachable!("magnitude masks stay in the STFT domain"),
    };
    let y = istft_decode(&masked, m.mixture.len())?;
    let mean = mask.real.mean().unwrap_or(0.0);
    println!(
        "{:?} mask {:?}, mean {mean:.3}; untrained SI-SDRi {:.2} dB",
        mask.kind,
        mask.real.dim(),
        si_sdri(y.samples(), m.target.samples(), m.mixture.samples())?
    );
    Ok(())
}

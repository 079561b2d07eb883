//! SI-SDR, SI-SDRi, STOI, failure rate and EER on hand-made inputs.

use tse::audio::{mix_min, synth_utterance, SpeakerProfile};
use tse::metrics::{eer, failure_rate, si_sdr, si_sdri, stoi};

fn main() -> anyhow::Result<()> {
    let t = synth_utterance(&SpeakerProfile::random("t", 1), 1.0, 0)?;
    let i = synth_utterance(&SpeakerProfile::random("i", 2), 1.0, 0)?;
    let m = mix_min(&t, &i, 5.0)?;
    let (mix, tgt) = (m.mixture.samples(), m.target.samples());
    println!("SI-SDR(mixture) {:.2} dB", si_sdr(mix, tgt)?);
    println!("SI-SDR(2 x target) {:.1} dB (capped)", si_sdr(&tgt.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), tgt)?);
    println!("SI-SDRi(target) {:.2} dB", si_sdri(tgt, tgt, mix)?);
    println!("STOI(mixture) {:.3}", stoi(mix, tgt)?);
    println!("failure rate {:.1}%", failure_rate(&[3.0, 0.5, 1.0, -2.0])?);
    println!("EER {:.2}%", eer(&[0.4, 0.6, 0.8], &[0.2, 0.3, 0.5])?);
    Ok(())
}

//! Conv1D encoder / transposed-Conv1D decoder: random versus calibrated start.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tse::audio::{synth_utterance, SpeakerProfile};
use tse::frontend::{conv_encode, deconv_decode, LearnableFrontend};
use tse::metrics::si_sdr;
use tse::nn::ParamStore;

fn main() -> anyhow::Result<()> {
    let fe = LearnableFrontend::default();
    let calib: Vec<Vec<f64>> = (0..16)
        .map(|i| synth_utterance(&SpeakerProfile::random(format!("c{i}"), i), 2.0, i).map(|s| s.into_samples()))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&[f64]> = calib.iter().map(|v| v.as_slice()).collect();
    let x = synth_utterance(&SpeakerProfile::random("held-out", 99), 2.0, 5)?;

    for paired in [false, true] {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        if paired {
            fe.init_paired(&mut store, &mut rng, &refs)?;
        } else {
            fe.init(&mut store, &mut rng);
        }
        let z = conv_encode(&x, &fe, &store)?;
        let y = deconv_decode(&z, &fe, &store, x.len())?;
        println!(
            "{:>6} init: {} frames x {} filters, pass-through SI-SDR {:.2} dB",
            if paired { "paired" } else { "random" },
            z.frames.nrows(),
            z.frames.ncols(),
            si_sdr(y.samples(), x.samples())?
        );
    }
    Ok(())
}

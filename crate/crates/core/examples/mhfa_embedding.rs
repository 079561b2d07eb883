//! MHFA speaker embeddings: cosine between utterances of the same and of
//! different synthetic speakers (random weights, no training).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tse::audio::{synth_utterance, SpeakerProfile};
use tse::nn::ParamStore;
use tse::speaker::{mhfa_embed, Mhfa};
use tse::upstream::ToyUpstream;

fn main() -> anyhow::Result<()> {
    let up = ToyUpstream::new(0, 4, 192)?;
    let mhfa = Mhfa::new("spk", 5, 192, 128, 4, 256);
    let mut store = ParamStore::new();
    mhfa.init(&mut store, &mut ChaCha8Rng::seed_from_u64(1));
    println!("MHFA parameters: {}", mhfa.param_count());

    let (a, b) = (SpeakerProfile::random("a", 10), SpeakerProfile::random("b", 20));
    let embed = |p: &SpeakerProfile, utt: u64| -> anyhow::Result<_> {
        Ok(mhfa_embed(&up.extract(&synth_utterance(p, 1.0, utt)?)?, &mhfa, &store)?)
    };
    let (a1, a2, b1) = (embed(&a, 1)?, embed(&a, 2)?, embed(&b, 1)?);
    println!("same speaker cosine      {:.4}", a1.cosine(&a2)?);
    println!("different speaker cosine {:.4}", a1.cosine(&b1)?);
    Ok(())
}

//! Toy frozen upstream plus a softmax-weighted sum over its layers.

use tse::audio::{synth_utterance, SpeakerProfile};
use tse::upstream::{weighted_layer_sum, LayerWeights, ToyUpstream};

fn main() -> anyhow::Result<()> {
    let up = ToyUpstream::new(0, 4, 192)?;
    let x = synth_utterance(&SpeakerProfile::random("spk", 4), 1.0, 0)?;
    let stack = up.extract(&x)?;
    println!(
        "{} layers x {} frames x {} dims, upstream checksum {}",
        stack.num_layers(),
        stack.frames(),
        stack.dim(),
        &up.checksum()[..16]
    );
    let weights = LayerWeights {
        logits: vec![0.0, 0.5, 1.0, 0.5, 0.0],
    };
    let h = weighted_layer_sum(&stack, &weights)?;
    println!("weights {:.3?} -> summed features {:?}", weights.normalized(), h.dim());
    Ok(())
}

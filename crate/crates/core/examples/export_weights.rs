//! Writes the two layer-weight distributions of a checkpoint as CSV. Uses
//! an untrained checkpoint, so both rows are uniform.

use tse::audio::{build_dataset, DatasetSpec, SplitCounts};
use tse::config::RunConfig;
use tse::harness::{export_layer_weights, load_samples, untrained_checkpoint, FeatureProvider};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("tse_export_example");
    let spec = DatasetSpec {
        num_speakers: 4,
        counts: SplitCounts { train: 2, valid: 1, test: 1 },
        snr_range: (0.0, 0.0),
        duration_s: 1.0,
        seed: 0,
    };
    let [train_m, ..] = build_dataset(&spec, &dir.join("data"))?;
    let cfg = RunConfig::preset(5)?;
    let train = load_samples(&train_m, Some(&FeatureProvider::new(&cfg.upstream)?))?;
    let ckpt = dir.join("untrained");
    untrained_checkpoint(&cfg, &train)?.save(&ckpt)?;
    let csv = dir.join("layer_weights.csv");
    export_layer_weights(&ckpt, &csv)?;
    print!("{}", std::fs::read_to_string(&csv)?);
    Ok(())
}

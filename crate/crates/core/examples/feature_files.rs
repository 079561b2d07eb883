//! Precomputes LFSC feature dumps for a manifest and reads one back.

use tse::audio::{build_dataset, load_manifest, DatasetSpec, SplitCounts};
use tse::harness::{feature_path, precompute_features};
use tse::upstream::{load_features, ToyUpstream};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("tse_features_example");
    let spec = DatasetSpec {
        num_speakers: 4,
        counts: SplitCounts { train: 3, valid: 1, test: 1 },
        snr_range: (-5.0, 5.0),
        duration_s: 1.0,
        seed: 4,
    };
    let [train_m, ..] = build_dataset(&spec, &dir.join("data"))?;
    let records = load_manifest(&train_m)?;
    let root = train_m.parent().expect("manifest has a parent");
    let up = ToyUpstream::new(0, 4, 192)?;
    let n = precompute_features(&records, root, &up, &dir.join("feats"))?;
    let path = feature_path(&dir.join("feats"), root, &records[0].mixture)?;
    let stack = load_features(&path)?;
    println!(
        "{n} dumps; {} holds {} layers x {} frames x {} dims for {} samples",
        path.display(),
        stack.num_layers(),
        stack.frames(),
        stack.dim(),
        stack.source_length
    );
    Ok(())
}

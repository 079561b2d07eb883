//! Builds a small mixture corpus and prints the first manifest entry.
//!
//! cargo run --example simulate_corpus -- /tmp/tse_corpus

use std::path::PathBuf;

use tse::audio::{build_dataset, load_manifest, read_wav, DatasetSpec, SplitCounts};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tse_corpus"));
    let spec = DatasetSpec {
        num_speakers: 4,
        counts: SplitCounts { train: 6, valid: 2, test: 2 },
        snr_range: (-5.0, 5.0),
        duration_s: 1.0,
        seed: 3,
    };
    let manifests = build_dataset(&spec, &out)?;
    let records = load_manifest(&manifests[0])?;
    let r = &records[0];
    let mix = read_wav(&r.mixture)?;
    println!("{} train mixtures under {}", records.len(), out.display());
    println!(
        "{}: target {} vs interference {} at {:.2} dB, {:.2} s, peak {:.3}",
        r.id,
        r.speaker,
        r.interference_speaker,
        r.snr_db,
        mix.duration_s(),
        mix.peak()
    );
    Ok(())
}

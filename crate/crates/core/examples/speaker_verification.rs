//! MHFA + AM-softmax speaker verification on a synthetic corpus.

use tse::audio::{build_sv_corpus, SvCorpusSpec};
use tse::config::UpstreamConfig;
use tse::harness::{sv_benchmark, SvConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("tse_sv_example");
    let spec = SvCorpusSpec {
        num_speakers: 6,
        train_utts: 10,
        test_utts: 4,
        duration_s: 1.0,
        seed: 2,
    };
    let (_, trials) = build_sv_corpus(&spec, &dir)?;
    let cfg = SvConfig {
        upstream: UpstreamConfig::Toy { seed: 0, layers: 4, dim: 192 },
        heads: 8,
        compress: 64,
        embed_dim: 64,
        epochs: 5,
        ..SvConfig::default()
    };
    let r = sv_benchmark(&cfg, &dir, &trials)?;
    println!(
        "{} trials ({} target): EER {:.2}% after {} epochs, {:.2}% untrained",
        r.num_trials, r.num_target, r.eer_pct, r.epochs, r.untrained_eer_pct
    );
    Ok(())
}

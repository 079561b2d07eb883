//! Trains a shrunken system 7 for a few epochs, then evaluates the best
//! checkpoint and the two oracle references on the test split.

use tse::audio::{build_dataset, DatasetSpec, SplitCounts};
use tse::config::RunConfig;
use tse::harness::{evaluate, train, OracleMode, BEST_DIR};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("tse_train_example");
    let spec = DatasetSpec {
        num_speakers: 4,
        counts: SplitCounts { train: 24, valid: 6, test: 6 },
        snr_range: (-5.0, 5.0),
        duration_s: 1.0,
        seed: 1,
    };
    let [train_m, valid_m, test_m] = build_dataset(&spec, &dir.join("data"))?;

    let mut cfg = RunConfig::preset(7)?;
    cfg.model.blstm_hidden = 32;
    cfg.model.embed_dim = 32;
    cfg.optimizer.epochs = 3;
    let out = dir.join("run");
    let outcome = train(&cfg, &train_m, &valid_m, &out, None)?;
    for e in &outcome.curve {
        println!("epoch {} train {:.3} valid -SI-SDR {:.3} ({:.1} s)", e.epoch, e.train_loss, e.valid_neg_si_sdr, e.wall_clock_s);
    }
    for mode in [OracleMode::None, OracleMode::Target, OracleMode::Mixture] {
        let r = evaluate(&out.join(BEST_DIR), &test_m, &dir.join(format!("{mode:?}.json")), mode)?;
        println!("{mode:?}: {}", r.summary());
    }
    Ok(())
}

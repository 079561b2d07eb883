#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tse::audio::{build_dataset, DatasetSpec, SplitCounts};
use tse::config::{ModelDims, RunConfig, UpstreamConfig};
use tse::harness::{load_samples, FeatureProvider, Sample};

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub manifests: [PathBuf; 3],
}

impl Corpus {
    pub fn build(num_speakers: usize, counts: (usize, usize, usize), seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            num_speakers,
            counts: SplitCounts {
                train: counts.0,
                valid: counts.1,
                test: counts.2,
            },
            snr_range: (-5.0, 5.0),
            duration_s: 1.0,
            seed,
        };
        let manifests = build_dataset(&spec, dir.path()).unwrap();
        Self { dir, manifests }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// `[train, valid, test]` samples with features from `upstream`.
    pub fn samples(&self, upstream: &UpstreamConfig) -> [Vec<Sample>; 3] {
        let p = FeatureProvider::new(upstream).unwrap();
        self.manifests
            .clone()
            .map(|m| load_samples(&m, Some(&p)).unwrap())
    }
}

pub fn tiny_upstream() -> UpstreamConfig {
    UpstreamConfig::Toy {
        seed: 3,
        layers: 2,
        dim: 16,
    }
}

pub fn tiny_dims() -> ModelDims {
    ModelDims {
        blstm_hidden: 8,
        encoder_filters: 32,
        embed_dim: 8,
        mhfa_heads: 2,
        mhfa_compress: 8,
        spk_blstm_hidden: 8,
        spk_blstm_layers: 1,
    }
}

/// A preset shrunk to test size.
pub fn tiny_config(system: u8) -> RunConfig {
    let mut c = RunConfig::preset(system).unwrap();
    c.upstream = tiny_upstream();
    c.model = tiny_dims();
    c.optimizer.batch_size = 4;
    c.optimizer.epochs = 2;
    c.optimizer.lr = 3e-3;
    c.optimizer.crop_s = 1.0;
    c.seed = 5;
    c
}

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::{read_wav, AudioSignal, MixtureRecord};
use crate::config::UpstreamConfig;
use crate::error::{Error, Result};
use crate::upstream::{load_features, store_features, FeatureStack, ToyUpstream};

/// Frozen upstream behind a [`UpstreamConfig`]: either the toy model run on
/// the fly, or LFSC dumps stored at `dir/<audio path relative to root>.lfsc`.
#[derive(Debug, Clone)]
pub enum FeatureProvider {
    Toy(ToyUpstream),
    Files { dir: PathBuf },
}

impl FeatureProvider {
    pub fn new(config: &UpstreamConfig) -> Result<Self> {
        match config {
            UpstreamConfig::Toy { seed, layers, dim } => Ok(Self::Toy(ToyUpstream::new(*seed, *layers, *dim)?)),
            UpstreamConfig::Files { dir } => {
                if !dir.is_dir() {
                    return Err(Error::Config(format!("feature directory {} does not exist", dir.display())));
                }
                Ok(Self::Files { dir: dir.clone() })
            }
        }
    }

    /// Features of `signal`, stored at `audio` (relative to `root`) for the
    /// file-backed provider.
    pub fn features(&self, root: &Path, audio: &Path, signal: &AudioSignal) -> Result<FeatureStack> {
        match self {
            Self::Toy(up) => up.extract(signal),
            Self::Files { dir } => {
                let path = feature_path(dir, root, audio)?;
                let stack = load_features(&path)?;
                if stack.source_length != signal.len() as u64 {
                    return Err(Error::Config(format!(
                        "{} was computed from {} samples, audio has {}",
                        path.display(),
                        stack.source_length,
                        signal.len()
                    )));
                }
                Ok(stack)
            }
        }
    }

    /// Identity of the frozen upstream: SHA-256 of the toy parameters, or
    /// the dump directory (files are never written during training).
    pub fn checksum(&self) -> String {
        match self {
            Self::Toy(up) => up.checksum(),
            Self::Files { dir } => format!("files:{}", dir.display()),
        }
    }
}

/// `dir / (audio relative to root)` with the extension replaced by `lfsc`.
pub fn feature_path(dir: &Path, root: &Path, audio: &Path) -> Result<PathBuf> {
    let rel = audio.strip_prefix(root).map_err(|_| {
        Error::Validation(format!("{} is not under the manifest directory {}", audio.display(), root.display()))
    })?;
    Ok(dir.join(rel).with_extension("lfsc"))
}

/// Extracts toy features for every mixture and enrollment of a manifest and
/// stores them under `out_dir`, mirroring the audio layout. Returns the
/// number of files written.
pub fn precompute_features(records: &[MixtureRecord], root: &Path, upstream: &ToyUpstream, out_dir: &Path) -> Result<usize> {
    let mut paths: Vec<&Path> = records
        .iter()
        .flat_map(|r| [r.mixture.as_path(), r.enrollment.as_path()])
        .collect();
    paths.sort();
    paths.dedup();
    paths
        .par_iter()
        .map(|audio| {
            let signal = read_wav(audio)?;
            let stack = upstream.extract(&signal)?;
            let dest = feature_path(out_dir, root, audio)?;
            if let Some(parent) = dest.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            store_features(&dest, &stack)
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(paths.len())
}

use std::path::Path;

use rayon::prelude::*;

use super::FeatureProvider;
use crate::audio::{load_manifest, read_wav, AudioSignal, MixtureRecord};
use crate::error::{Error, Result};
use crate::upstream::FeatureStack;

/// One manifest entry loaded into memory, with upstream features of the full
/// mixture and enrollment when the model reads them.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub mixture: AudioSignal,
    pub target: AudioSignal,
    pub enrollment: AudioSignal,
    pub mix_feats: Option<FeatureStack>,
    pub enroll_feats: Option<FeatureStack>,
}

impl Sample {
    pub fn from_record(record: &MixtureRecord, root: &Path, provider: Option<&FeatureProvider>) -> Result<Self> {
        let mixture = read_wav(&record.mixture)?;
        let target = read_wav(&record.target)?;
        let enrollment = read_wav(&record.enrollment)?;
        if mixture.len() != target.len() {
            return Err(Error::Validation(format!(
                "{}: mixture has {} samples, target {}",
                record.id,
                mixture.len(),
                target.len()
            )));
        }
        let (mix_feats, enroll_feats) = match provider {
            Some(p) => (
                Some(p.features(root, &record.mixture, &mixture)?),
                Some(p.features(root, &record.enrollment, &enrollment)?),
            ),
            None => (None, None),
        };
        Ok(Self {
            id: record.id.clone(),
            mixture,
            target,
            enrollment,
            mix_feats,
            enroll_feats,
        })
    }
}

/// Loads every manifest entry in parallel; order follows the manifest.
pub fn load_samples(manifest: &Path, provider: Option<&FeatureProvider>) -> Result<Vec<Sample>> {
    let records = load_manifest(manifest)?;
    if records.is_empty() {
        return Err(Error::Validation(format!("{} lists no mixtures", manifest.display())));
    }
    let root = manifest.parent().unwrap_or(Path::new("."));
    records
        .par_iter()
        .map(|r| Sample::from_record(r, root, provider))
        .collect()
}

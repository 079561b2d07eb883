use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_samples, Checkpoint, FeatureProvider, Sample};
use crate::error::{Error, Result};
use crate::extractor::TseModel;
use crate::metrics::{si_sdr, stoi, MetricReport, SampleMetrics};
use crate::nn::ParamStore;

/// Replaces the model output for sanity baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    None,
    /// estimate := target
    Target,
    /// estimate := mixture
    Mixture,
}

impl OracleMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "target" => Ok(Self::Target),
            "mixture" => Ok(Self::Mixture),
            other => Err(Error::Config(format!("unknown oracle mode {other:?} (none|target|mixture)"))),
        }
    }
}

pub fn sample_metrics(id: &str, estimate: &[f64], target: &[f64], mixture: &[f64]) -> Result<SampleMetrics> {
    let si_sdr_mix = si_sdr(mixture, target)?;
    let si_sdr_est = si_sdr(estimate, target)?;
    Ok(SampleMetrics {
        id: id.to_string(),
        si_sdr_mix,
        si_sdr_est,
        si_sdri: si_sdr_est - si_sdr_mix,
        stoi: stoi(estimate, target)?,
    })
}

/// Per-sample metrics in manifest order. Pure: identical under any thread
/// count.
pub fn evaluate_samples(model: &TseModel, store: &ParamStore, samples: &[Sample], oracle: OracleMode) -> Result<MetricReport> {
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let (mix, tgt) = (s.mixture.samples(), s.target.samples());
            let est = match oracle {
                OracleMode::Target => tgt.to_vec(),
                OracleMode::Mixture => mix.to_vec(),
                OracleMode::None => {
                    let p = model.prepare(&s.mixture, s.mix_feats.as_ref(), &s.enrollment, s.enroll_feats.as_ref(), None)?;
                    model.infer(store, &p)?
                }
            };
            sample_metrics(&s.id, &est, tgt, mix)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::new(per_sample)
}

/// Evaluates a checkpoint directory on a manifest and writes the JSON report.
pub fn evaluate(ckpt_dir: &Path, manifest: &Path, report_path: &Path, oracle: OracleMode) -> Result<MetricReport> {
    let ck = Checkpoint::load(ckpt_dir)?;
    let model = ck.model()?;
    let provider = match (oracle, model.config.uses_ssl()) {
        (OracleMode::None, true) => Some(FeatureProvider::new(&model.config.upstream)?),
        _ => None,
    };
    let samples = load_samples(manifest, provider.as_ref())?;
    let report = evaluate_samples(&model, &ck.params, &samples, oracle)?;
    report.save(report_path)?;
    Ok(report)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::failure_rate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMetrics {
    pub id: String,
    pub si_sdr_mix: f64,
    pub si_sdr_est: f64,
    pub si_sdri: f64,
    pub stoi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregates {
    pub mean_si_sdri: f64,
    pub mean_stoi: f64,
    pub failure_rate_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub per_sample: Vec<SampleMetrics>,
    pub aggregates: Aggregates,
}

impl Aggregates {
    pub fn compute(per_sample: &[SampleMetrics]) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Degenerate("metric report without samples".into()));
        }
        let n = per_sample.len() as f64;
        let sdri: Vec<f64> = per_sample.iter().map(|s| s.si_sdri).collect();
        Ok(Self {
            mean_si_sdri: sdri.iter().sum::<f64>() / n,
            mean_stoi: per_sample.iter().map(|s| s.stoi).sum::<f64>() / n,
            failure_rate_pct: failure_rate(&sdri)?,
        })
    }
}

impl MetricReport {
    pub fn new(per_sample: Vec<SampleMetrics>) -> Result<Self> {
        let aggregates = Aggregates::compute(&per_sample)?;
        Ok(Self {
            per_sample,
            aggregates,
        })
    }

    /// Largest absolute deviation between stored and recomputed aggregates.
    pub fn aggregate_drift(&self) -> Result<f64> {
        let a = Aggregates::compute(&self.per_sample)?;
        Ok([
            a.mean_si_sdri - self.aggregates.mean_si_sdri,
            a.mean_stoi - self.aggregates.mean_stoi,
            a.failure_rate_pct - self.aggregates.failure_rate_pct,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One-line summary with percentages at two decimals.
    pub fn summary(&self) -> String {
        format!(
            "SI-SDRi {:.2} dB | STOI {:.2}% | FR {:.2}% | n={}",
            self.aggregates.mean_si_sdri,
            100.0 * self.aggregates.mean_stoi,
            self.aggregates.failure_rate_pct,
            self.per_sample.len()
        )
    }
}

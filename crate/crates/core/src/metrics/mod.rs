//! Training objectives and evaluation metrics.

mod eer;
mod report;
mod sisdr;
mod stoi;

pub use eer::{eer, failure_rate, FAILURE_THRESHOLD_DB};
pub use report::{Aggregates, MetricReport, SampleMetrics};
pub use sisdr::{si_sdr, si_sdr_loss, si_sdri, spectral_mse, SI_SDR_CAP_DB};
pub use stoi::stoi;

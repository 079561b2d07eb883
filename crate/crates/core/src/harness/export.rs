use std::path::Path;

use super::Checkpoint;
use crate::error::{Error, Result};

/// Softmax-normalized layer weights of a checkpoint as
/// `(spk_enc, extractor)` rows.
pub fn layer_weight_rows(ckpt_dir: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let ck = Checkpoint::load(ckpt_dir)?;
    let model = ck.model()?;
    model
        .layer_weights(&ck.params)
        .map_err(|e| Error::corrupt(ckpt_dir, format!("no layer weights to export: {e}")))
}

pub fn layer_weights_csv(spk: &[f64], ext: &[f64]) -> String {
    let mut out = String::from("module");
    for l in 0..spk.len() {
        out.push_str(&format!(",layer_{l}"));
    }
    out.push('\n');
    for (label, row) in [("spk_enc", spk), ("extractor", ext)] {
        out.push_str(label);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes `module,layer_0..layer_L` with one row per module.
pub fn export_layer_weights(ckpt_dir: &Path, out_csv: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (spk, ext) = layer_weight_rows(ckpt_dir)?;
    std::fs::write(out_csv, layer_weights_csv(&spk, &ext)).map_err(|e| Error::io(out_csv, e))?;
    Ok((spk, ext))
}

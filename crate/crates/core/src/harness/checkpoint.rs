use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::extractor::TseModel;
use crate::nn::tnsr::{load_params, save_params};
use crate::nn::{Adam, ParamStore};

pub const META_FILE: &str = "meta.json";
pub const PARAMS_FILE: &str = "params.tnsr";
pub const OPTIM_FILE: &str = "optim.tnsr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    /// Completed epochs; 0 for an untrained model.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub valid_loss: Option<f64>,
    /// `None` until a validation pass has run.
    pub best_valid_loss: Option<f64>,
    /// Upstream `(L + 1, D)` the parameters were shaped for.
    pub upstream_dims: Option<(usize, usize)>,
    pub upstream_checksum: Option<String>,
    pub optimizer_step: u64,
}

/// Directory layout: `meta.json`, `params.tnsr` and, for resumable
/// checkpoints, `optim.tnsr` with Adam moments as `m/<name>` and `v/<name>`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = dir.join(META_FILE);
        fs::write(&meta, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&meta, e))?;
        save_params(&dir.join(PARAMS_FILE), &self.params)?;
        if let Some(adam) = &self.optimizer {
            let mut moments = ParamStore::new();
            for (name, m) in &adam.first {
                moments.insert(&format!("m/{name}"), m.clone());
            }
            for (name, v) in &adam.second {
                moments.insert(&format!("v/{name}"), v.clone());
            }
            save_params(&dir.join(OPTIM_FILE), &moments)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&text).map_err(|e| Error::corrupt(&meta_path, e.to_string()))?;
        meta.config.validate()?;
        let params = load_params(&dir.join(PARAMS_FILE))?;
        let optim_path = dir.join(OPTIM_FILE);
        let optimizer = if optim_path.is_file() {
            let moments = load_params(&optim_path)?;
            let mut adam = Adam::new(meta.config.optimizer.lr);
            adam.step = meta.optimizer_step;
            for (name, t) in moments.iter() {
                match name.split_once('/') {
                    Some(("m", p)) => adam.first.insert(p.to_string(), t.clone()),
                    Some(("v", p)) => adam.second.insert(p.to_string(), t.clone()),
                    _ => return Err(Error::corrupt(&optim_path, format!("unexpected tensor {name}"))),
                };
            }
            Some(adam)
        } else {
            None
        };
        Ok(Self {
            meta,
            params,
            optimizer,
        })
    }

    /// Rebuilds the model and confirms every parameter tensor fits it.
    pub fn model(&self) -> Result<TseModel> {
        let model = TseModel::new(&self.meta.config, self.meta.upstream_dims)?;
        model.check_params(&self.params)?;
        Ok(model)
    }
}

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_samples, Checkpoint, CheckpointMeta, FeatureProvider, Sample};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::extractor::{Prepared, TseModel};
use crate::frontend::HOP;
use crate::metrics::si_sdr;
use crate::nn::{add_grads, clip_grad_norm, Adam, Graph, Mat, ParamStore};

pub const CURVE_FILE: &str = "curve.jsonl";
pub const BEST_DIR: &str = "best";
pub const LAST_DIR: &str = "last";
/// Mixtures used to fit a learnable frontend before training.
const CALIBRATION_MIXTURES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLog {
    pub epoch: usize,
    /// Cumulative training time, continued across resumes.
    pub wall_clock_s: f64,
    pub train_loss: f64,
    pub valid_neg_si_sdr: f64,
}

pub fn read_curve(path: &Path) -> Result<Vec<EpochLog>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::corrupt(path, format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    /// Entries appended by this run.
    pub curve: Vec<EpochLog>,
    pub upstream_checksum_before: Option<String>,
    pub upstream_checksum_after: Option<String>,
}

/// Upstream provider and `(L + 1, D)` for configs that read SSL features.
pub fn upstream_for(config: &RunConfig, probe: Option<&Sample>) -> Result<Option<(FeatureProvider, (usize, usize))>> {
    if !config.uses_ssl() {
        return Ok(None);
    }
    let provider = FeatureProvider::new(&config.upstream)?;
    let dims = match (&provider, probe.and_then(|s| s.mix_feats.as_ref())) {
        (FeatureProvider::Toy(up), _) => (up.layers + 1, up.dim),
        (_, Some(stack)) => (stack.num_layers(), stack.dim()),
        (_, None) => return Err(Error::Config("cannot infer upstream dims without a loaded sample".into())),
    };
    Ok(Some((provider, dims)))
}

/// Fresh parameters for `model`; a learnable frontend is calibrated on the
/// first training mixtures.
pub fn initial_params(model: &TseModel, train: &[Sample]) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    let calibration: Vec<&[f64]> = train.iter().take(CALIBRATION_MIXTURES).map(|s| s.mixture.samples()).collect();
    model.init(&mut store, &mut rng, &calibration)?;
    store.quantize_f32();
    Ok(store)
}

/// Prepares a full-length sample, with its target.
pub fn prepare_full(model: &TseModel, s: &Sample) -> Result<Prepared> {
    model.prepare(&s.mixture, s.mix_feats.as_ref(), &s.enrollment, s.enroll_feats.as_ref(), Some(&s.target))
}

/// Random hop-aligned crop of at most `crop` samples; upstream features are
/// sliced from the full-utterance stack.
fn prepare_crop(model: &TseModel, s: &Sample, crop: usize, rng: &mut ChaCha8Rng) -> Result<Prepared> {
    let len = s.mixture.len();
    if len <= crop {
        return prepare_full(model, s);
    }
    let start = HOP * rng.gen_range(0..=(len - crop) / HOP);
    let mixture = s.mixture.slice(start, crop)?;
    let target = s.target.slice(start, crop)?;
    let mix_feats = match &s.mix_feats {
        Some(stack) => {
            let first = start / HOP;
            let frames = crop.div_ceil(HOP).min(stack.frames() - first);
            Some(stack.slice_frames(first, frames)?)
        }
        None => None,
    };
    model.prepare(&mixture, mix_feats.as_ref(), &s.enrollment, s.enroll_feats.as_ref(), Some(&target))
}

fn sample_grads(model: &TseModel, store: &ParamStore, p: &Prepared) -> Result<(f64, BTreeMap<String, Mat>)> {
    let mut g = Graph::new();
    let loss = model.loss(&mut g, store, p)?;
    let value = g.value(loss)[[0, 0]];
    let grads = g.backward(loss);
    Ok((value, g.param_grads(&grads)))
}

/// Mean negative SI-SDR of full-utterance estimates, the validation metric
/// for every loss kind.
pub fn validation_loss(model: &TseModel, store: &ParamStore, samples: &[Sample]) -> Result<f64> {
    let values = samples
        .par_iter()
        .map(|s| {
            let p = model.prepare(&s.mixture, s.mix_feats.as_ref(), &s.enrollment, s.enroll_feats.as_ref(), None)?;
            let est = model.infer(store, &p)?;
            Ok(-si_sdr(&est, s.target.samples())?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_7241_0000_0000);
    rng.set_stream(epoch as u64);
    rng
}

fn all_finite(grads: &BTreeMap<String, Mat>) -> Option<&str> {
    grads
        .iter()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(k, _)| k.as_str())
}

/// Loads the manifests and trains; see [`train_on`].
pub fn train(config: &RunConfig, train_manifest: &Path, valid_manifest: &Path, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let provider = if config.uses_ssl() {
        Some(FeatureProvider::new(&config.upstream)?)
    } else {
        None
    };
    let train = load_samples(train_manifest, provider.as_ref())?;
    let valid = load_samples(valid_manifest, provider.as_ref())?;
    train_on(config, &train, &valid, out_dir, resume)
}

/// Joint training of every downstream parameter with Adam. Writes
/// `curve.jsonl`, `last/` after every epoch and `best/` whenever the
/// validation loss improves. Samples must carry upstream features when the
/// config reads them.
pub fn train_on(config: &RunConfig, train: &[Sample], valid: &[Sample], out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Validation("training needs non-empty train and valid splits".into()));
    }
    let upstream = upstream_for(config, train.first())?;
    let checksum_before = upstream.as_ref().map(|(p, _)| p.checksum());
    let model = TseModel::new(config, upstream.as_ref().map(|u| u.1))?;
    let opt = &config.optimizer;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let curve_path = out_dir.join(CURVE_FILE);
    let (mut store, mut adam, start_epoch, mut best, mut clock) = match resume {
        Some(dir) => {
            let ck = Checkpoint::load(dir)?;
            // only the epoch budget may change on resume
            let mut expected = ck.meta.config.clone();
            expected.optimizer.epochs = opt.epochs;
            if expected != *config {
                return Err(Error::Config(format!("{} was trained with a different config", dir.display())));
            }
            model.check_params(&ck.params)?;
            let adam = ck.optimizer.clone().ok_or_else(|| Error::corrupt(dir, "no optimizer state to resume from"))?;
            let clock = if curve_path.is_file() {
                read_curve(&curve_path)?.last().map_or(0.0, |e| e.wall_clock_s)
            } else {
                0.0
            };
            (ck.params, adam, ck.meta.epoch, ck.meta.best_valid_loss, clock)
        }
        None => {
            fs::write(&curve_path, "").map_err(|e| Error::io(&curve_path, e))?;
            (initial_params(&model, train)?, Adam::new(opt.lr), 0, None, 0.0)
        }
    };

    let crop = ((opt.crop_s * crate::audio::SAMPLE_RATE as f64) as usize / HOP * HOP).max(crate::frontend::KERNEL);
    let meta = |epoch: usize, train_loss: Option<f64>, valid_loss: Option<f64>, best: Option<f64>, step: u64| CheckpointMeta {
        config: config.clone(),
        epoch,
        train_loss,
        valid_loss,
        best_valid_loss: best,
        upstream_dims: model.upstream_dims,
        upstream_checksum: checksum_before.clone(),
        optimizer_step: step,
    };
    let mut best_ck = match resume {
        Some(_) if out_dir.join(BEST_DIR).is_dir() => Checkpoint::load(&out_dir.join(BEST_DIR))?,
        _ => Checkpoint {
            meta: meta(start_epoch, None, None, best, adam.step),
            params: store.clone(),
            optimizer: None,
        },
    };
    let mut last_ck = best_ck.clone();
    let mut curve = Vec::new();

    for epoch in start_epoch + 1..=opt.epochs {
        let started = Instant::now();
        let mut rng = epoch_rng(config.seed, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(opt.batch_size).enumerate() {
            // crops are drawn sequentially so the batch is identical under any thread count
            let prepared = idx
                .iter()
                .map(|&i| prepare_crop(&model, &train[i], crop, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let results = prepared
                .par_iter()
                .map(|p| sample_grads(&model, &store, p))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = BTreeMap::new();
            let mut batch_loss = 0.0;
            for ((loss, g), &i) in results.iter().zip(idx) {
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch,
                        detail: format!("loss {loss} on sample {}", train[i].id),
                    });
                }
                if let Some(name) = all_finite(g) {
                    return Err(Error::NonFinite {
                        epoch,
                        batch,
                        detail: format!("gradient of {name} on sample {}", train[i].id),
                    });
                }
                batch_loss += loss;
                add_grads(&mut grads, g);
            }
            let n = idx.len() as f64;
            grads.values_mut().for_each(|g| g.mapv_inplace(|v| v / n));
            clip_grad_norm(&mut grads, opt.grad_clip);
            adam.update(&mut store, &grads);
            store.quantize_f32();
            loss_sum += batch_loss;
            log::debug!("epoch {epoch} batch {batch}: loss {:.4}", batch_loss / n);
        }
        let train_loss = loss_sum / train.len() as f64;
        let valid_loss = validation_loss(&model, &store, valid)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: usize::MAX,
                detail: format!("validation loss {valid_loss}"),
            });
        }
        clock += started.elapsed().as_secs_f64();
        let entry = EpochLog {
            epoch,
            wall_clock_s: clock,
            train_loss,
            valid_neg_si_sdr: valid_loss,
        };
        let mut file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&curve_path)
            .map_err(|e| Error::io(&curve_path, e))?;
        writeln!(file, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(&curve_path, e))?;
        log::info!("epoch {epoch}: train {train_loss:.4}, valid -SI-SDR {valid_loss:.3} dB, {clock:.1} s");
        curve.push(entry);

        let improved = best.map_or(true, |b| valid_loss < b);
        if improved {
            best = Some(valid_loss);
        }
        last_ck = Checkpoint {
            meta: meta(epoch, Some(train_loss), Some(valid_loss), best, adam.step),
            params: store.clone(),
            optimizer: Some(adam.clone()),
        };
        last_ck.save(&out_dir.join(LAST_DIR))?;
        if improved {
            best_ck = Checkpoint {
                optimizer: None,
                ..last_ck.clone()
            };
            best_ck.save(&out_dir.join(BEST_DIR))?;
        }
    }
    if curve.is_empty() && !out_dir.join(BEST_DIR).is_dir() {
        best_ck.save(&out_dir.join(BEST_DIR))?;
    }
    let checksum_after = upstream_for(config, train.first())?.map(|(p, _)| p.checksum());
    Ok(TrainOutcome {
        best: best_ck,
        last: last_ck,
        curve,
        upstream_checksum_before: checksum_before,
        upstream_checksum_after: checksum_after,
    })
}

/// An untrained checkpoint (epoch 0) for `config`.
pub fn untrained_checkpoint(config: &RunConfig, train: &[Sample]) -> Result<Checkpoint> {
    config.validate()?;
    let upstream = upstream_for(config, train.first())?;
    let model = TseModel::new(config, upstream.as_ref().map(|u| u.1))?;
    Ok(Checkpoint {
        meta: CheckpointMeta {
            config: config.clone(),
            epoch: 0,
            train_loss: None,
            valid_loss: None,
            best_valid_loss: None,
            upstream_dims: model.upstream_dims,
            upstream_checksum: upstream.map(|(p, _)| p.checksum()),
            optimizer_step: 0,
        },
        params: initial_params(&model, train)?,
        optimizer: None,
    })
}

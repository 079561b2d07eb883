use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureProvider;
use crate::audio::{read_wav, SvUtterance};
use crate::config::UpstreamConfig;
use crate::error::{Error, Result};
use crate::metrics::eer;
use crate::nn::{add_grads, clip_grad_norm, init_uniform, Adam, Graph, Mat, ParamStore};
use crate::speaker::{Mhfa, SpeakerEmbedding};
use crate::upstream::FeatureStack;

const CLASSES: &str = "sv.classes";

fn default_upstream() -> UpstreamConfig {
    UpstreamConfig::Toy {
        seed: 0,
        layers: 4,
        dim: 192,
    }
}

/// Speaker-verification run: MHFA trained with AM-softmax, cosine scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvConfig {
    pub upstream: UpstreamConfig,
    pub heads: usize,
    pub compress: usize,
    pub embed_dim: usize,
    pub scale: f64,
    pub margin: f64,
    pub lr: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Random training crop length in seconds.
    pub crop_s: f64,
    pub seed: u64,
}

impl Default for SvConfig {
    fn default() -> Self {
        Self {
            upstream: default_upstream(),
            heads: 32,
            compress: 128,
            embed_dim: 256,
            scale: 30.0,
            margin: 0.4,
            lr: 1e-3,
            grad_clip: 5.0,
            epochs: 20,
            batch_size: 16,
            crop_s: 1.0,
            seed: 0,
        }
    }
}

impl SvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.heads, self.compress, self.embed_dim, self.batch_size];
        if positive.contains(&0) {
            return Err(Error::Config("sv heads, compress, embed_dim and batch_size must be positive".into()));
        }
        if !(self.scale > 0.0 && self.margin >= 0.0 && self.lr > 0.0 && self.grad_clip > 0.0 && self.crop_s > 0.0) {
            return Err(Error::Config("sv scale, lr, grad_clip and crop_s must be positive, margin >= 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub target: bool,
    pub enroll: String,
    pub test: String,
}

/// Parses `target|nontarget <enroll> <test>` lines.
pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [label, enroll, test] => {
                let target = match *label {
                    "target" => true,
                    "nontarget" => false,
                    other => {
                        return Err(Error::Validation(format!("{}:{}: unknown label {other:?}", path.display(), n + 1)))
                    }
                };
                out.push(Trial {
                    target,
                    enroll: enroll.to_string(),
                    test: test.to_string(),
                });
            }
            _ => {
                return Err(Error::Validation(format!(
                    "{}:{}: expected `<label> <enroll> <test>`",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    if !out.iter().any(|t| t.target) || !out.iter().any(|t| !t.target) {
        return Err(Error::Validation(format!("{} needs both target and nontarget trials", path.display())));
    }
    Ok(out)
}

pub fn read_utterances(path: &Path) -> Result<Vec<SvUtterance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvReport {
    pub eer_pct: f64,
    /// EER of the same pipeline scored before any training.
    pub untrained_eer_pct: f64,
    pub num_trials: usize,
    pub num_target: usize,
    pub num_nontarget: usize,
    pub num_speakers: usize,
    pub num_train_utts: usize,
    pub epochs: usize,
    pub final_train_loss: Option<f64>,
}

/// MHFA with an AM-softmax class matrix over the training speakers.
pub struct SvModel {
    pub mhfa: Mhfa,
    pub params: ParamStore,
}

impl SvModel {
    pub fn embed(&self, stack: &FeatureStack) -> Result<SpeakerEmbedding> {
        crate::speaker::mhfa_embed(stack, &self.mhfa, &self.params)
    }
}

fn norm_rel(p: &str) -> String {
    p.trim_start_matches("./").to_string()
}

/// Cosine scores for `trials` from embeddings of every referenced file.
pub fn score_trials(model: &SvModel, trials: &[Trial], feats: &HashMap<String, FeatureStack>) -> Result<Vec<f64>> {
    let files: BTreeSet<&String> = trials.iter().flat_map(|t| [&t.enroll, &t.test]).collect();
    let embeds: HashMap<&String, SpeakerEmbedding> = files
        .into_par_iter()
        .map(|f| {
            let stack = feats.get(f).ok_or_else(|| Error::Validation(format!("no features for {f}")))?;
            Ok((f, model.embed(stack)?))
        })
        .collect::<Result<_>>()?;
    trials.iter().map(|t| embeds[&t.enroll].cosine(&embeds[&t.test])).collect()
}

fn trial_eer(trials: &[Trial], scores: &[f64]) -> Result<f64> {
    let (mut tar, mut non) = (Vec::new(), Vec::new());
    for (t, &s) in trials.iter().zip(scores) {
        if t.target {
            tar.push(s)
        } else {
            non.push(s)
        }
    }
    eer(&tar, &non)
}

fn utterance_loss(model: &Mhfa, store: &ParamStore, layers: &Arc<Vec<Mat>>, label: usize, cfg: &SvConfig) -> Result<(f64, BTreeMap<String, Mat>)> {
    let mut g = Graph::new();
    let e = model.forward(&mut g, store, layers)?;
    let w = store.var(&mut g, CLASSES);
    let loss = g.am_softmax(e, w, label, cfg.scale, cfg.margin)?;
    let value = g.value(loss)[[0, 0]];
    let grads = g.backward(loss);
    Ok((value, g.param_grads(&grads)))
}

/// Trains MHFA + AM-softmax on the `train` utterances of `data_dir`
/// (`utterances.jsonl`), scores `trials` by cosine similarity and returns
/// the report. Trials may only reference non-training utterances.
pub fn sv_benchmark(config: &SvConfig, data_dir: &Path, trials_path: &Path) -> Result<SvReport> {
    config.validate()?;
    let utts = read_utterances(&data_dir.join("utterances.jsonl"))?;
    let trials = read_trials(trials_path)?;
    let train: Vec<&SvUtterance> = utts.iter().filter(|u| u.split == "train").collect();
    let train_paths: BTreeSet<String> = train.iter().map(|u| norm_rel(&u.path)).collect();
    for t in &trials {
        for f in [&t.enroll, &t.test] {
            if train_paths.contains(&norm_rel(f)) {
                return Err(Error::Validation(format!("trial references training utterance {f}")));
            }
        }
    }
    let speakers: Vec<String> = train.iter().map(|u| u.speaker.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if speakers.len() < 2 {
        return Err(Error::Validation("sv training needs at least two speakers".into()));
    }
    let label_of: HashMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let provider = FeatureProvider::new(&config.upstream)?;
    let mut files: Vec<String> = train_paths.iter().cloned().collect();
    files.extend(trials.iter().flat_map(|t| [norm_rel(&t.enroll), norm_rel(&t.test)]));
    files.sort();
    files.dedup();
    let feats: HashMap<String, FeatureStack> = files
        .par_iter()
        .map(|rel| {
            let path: PathBuf = data_dir.join(rel);
            let signal = read_wav(&path)?;
            Ok((rel.clone(), provider.features(data_dir, &path, &signal)?))
        })
        .collect::<Result<_>>()?;
    let trials: Vec<Trial> = trials
        .into_iter()
        .map(|t| Trial {
            target: t.target,
            enroll: norm_rel(&t.enroll),
            test: norm_rel(&t.test),
        })
        .collect();

    let probe = feats.values().next().expect("at least one trial file");
    let mhfa = Mhfa::new("sv.mhfa", probe.num_layers(), probe.dim(), config.compress, config.heads, config.embed_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    mhfa.init(&mut store, &mut rng);
    store.insert(CLASSES, init_uniform(&mut rng, speakers.len(), config.embed_dim, 1.0));
    store.quantize_f32();

    let untrained = SvModel { mhfa: mhfa.clone(), params: store.clone() };
    let untrained_eer = trial_eer(&trials, &score_trials(&untrained, &trials, &feats)?)?;

    let examples: Vec<(Arc<Vec<Mat>>, usize)> = train
        .iter()
        .map(|u| {
            let stack = &feats[&norm_rel(&u.path)];
            (Arc::new(stack.layers_f64()), label_of[u.speaker.as_str()])
        })
        .collect();
    let crop = ((config.crop_s * crate::audio::SAMPLE_RATE as f64) as usize / crate::frontend::HOP).max(1);
    let mut adam = Adam::new(config.lr);
    let mut final_loss = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let crops: Vec<(Arc<Vec<Mat>>, usize)> = idx
                .iter()
                .map(|&i| {
                    let (layers, label) = &examples[i];
                    let t = layers[0].nrows();
                    if t <= crop {
                        return (Arc::clone(layers), *label);
                    }
                    let start = rng.gen_range(0..=t - crop);
                    let cut = layers.iter().map(|m| m.slice(ndarray::s![start..start + crop, ..]).to_owned()).collect();
                    (Arc::new(cut), *label)
                })
                .collect();
            let results = crops
                .par_iter()
                .map(|(l, y)| utterance_loss(&mhfa, &store, l, *y, config))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = BTreeMap::new();
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: 0,
                        detail: "sv AM-softmax loss".into(),
                    });
                }
                total += loss;
                add_grads(&mut grads, g);
            }
            let n = idx.len() as f64;
            grads.values_mut().for_each(|g| g.mapv_inplace(|v| v / n));
            clip_grad_norm(&mut grads, config.grad_clip);
            adam.update(&mut store, &grads);
            store.quantize_f32();
        }
        let mean = total / examples.len() as f64;
        log::info!("sv epoch {epoch}: AM-softmax loss {mean:.4}");
        final_loss = Some(mean);
    }

    let trained = SvModel { mhfa, params: store };
    let scores = score_trials(&trained, &trials, &feats)?;
    Ok(SvReport {
        eer_pct: trial_eer(&trials, &scores)?,
        untrained_eer_pct: untrained_eer,
        num_trials: trials.len(),
        num_target: trials.iter().filter(|t| t.target).count(),
        num_nontarget: trials.iter().filter(|t| !t.target).count(),
        num_speakers: speakers.len(),
        num_train_utts: train.len(),
        epochs: config.epochs,
        final_train_loss: final_loss,
    })
}

impl SvReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

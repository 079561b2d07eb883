use std::sync::Arc;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Extractor;
use crate::audio::{mix_min, synth_utterance, AudioSignal, SpeakerProfile};
use crate::config::{EncoderKind, ExtractorInput, LossKind, RunConfig, SpkEncKind};
use crate::error::{Error, Result};
use crate::frontend::{stft_encode, stft_frame_count, LearnableFrontend, MaskKind, N_BINS};
use crate::nn::{Graph, Mat, ParamStore, Var};
use crate::speaker::{Mhfa, StftSpeakerEncoder};
use crate::upstream::{softmax, FeatureStack};

pub const EXTRACTOR_LOGITS: &str = "extractor.layer_logits";
const SPK_PREFIX: &str = "spk_enc";

#[derive(Debug, Clone, PartialEq)]
enum SpkEnc {
    Mhfa(Mhfa),
    Blstm(StftSpeakerEncoder),
}

/// The full downstream model for one [`RunConfig`]: encoder, speaker
/// encoder, extractor and decoder. Parameters live in a separate
/// [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct TseModel {
    pub config: RunConfig,
    /// Upstream `(L + 1, D)`, when the config reads upstream features.
    pub upstream_dims: Option<(usize, usize)>,
    frontend: Option<LearnableFrontend>,
    spk: SpkEnc,
    pub extractor: Extractor,
}

/// Per-utterance inputs that do not depend on trainable parameters.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mixture: Arc<Vec<f64>>,
    /// Model frame count after aligning encoder and upstream streams.
    pub frames: usize,
    mix_re: Option<Arc<Mat>>,
    mix_im: Option<Arc<Mat>>,
    mix_mag: Option<Arc<Mat>>,
    mix_layers: Option<Arc<Vec<Mat>>>,
    enroll_layers: Option<Arc<Vec<Mat>>>,
    enroll_mag: Option<Arc<Mat>>,
    target: Option<Arc<Vec<f64>>>,
    target_mag: Option<Arc<Mat>>,
}

pub struct TseOutput {
    /// `1 x N` waveform estimate.
    pub estimate: Var,
    /// Masked mixture magnitude (magnitude masks only).
    pub est_mag: Option<Var>,
    pub mask: Var,
}

fn truncate_layers(stack: &FeatureStack, frames: usize) -> Arc<Vec<Mat>> {
    Arc::new(stack.layers_f64().into_iter().map(|m| m.slice(s![..frames, ..]).to_owned()).collect())
}

impl TseModel {
    /// `upstream_dims` is `(L + 1, D)` and is required whenever the config
    /// reads upstream features.
    pub fn new(config: &RunConfig, upstream_dims: Option<(usize, usize)>) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let needs_ssl = config.uses_ssl();
        let dims = match (needs_ssl, upstream_dims) {
            (true, None) => return Err(Error::Config("config reads upstream features but no upstream dims given".into())),
            (true, Some((l, d))) if l < 2 || d == 0 => {
                return Err(Error::Config(format!("upstream dims (L+1={l}, D={d}) are invalid")))
            }
            (true, d) => d,
            (false, _) => None,
        };
        let frontend = (config.encoder_kind == EncoderKind::Learnable).then(|| LearnableFrontend {
            filters: m.encoder_filters,
            ..LearnableFrontend::default()
        });
        let spk = match config.spk_enc_kind {
            SpkEncKind::Mhfa => {
                let (l, d) = dims.expect("checked");
                SpkEnc::Mhfa(Mhfa::new(SPK_PREFIX, l, d, m.mhfa_compress, m.mhfa_heads, m.embed_dim))
            }
            SpkEncKind::StftBlstm => SpkEnc::Blstm(StftSpeakerEncoder::new(
                SPK_PREFIX,
                N_BINS,
                m.spk_blstm_hidden,
                m.spk_blstm_layers,
                m.embed_dim,
            )),
        };
        let input = match config.extractor_input {
            ExtractorInput::Ssl => dims.expect("checked").1,
            ExtractorInput::Stft => N_BINS,
        };
        let mask_bins = match config.mask_kind {
            MaskKind::Encoder => m.encoder_filters,
            MaskKind::Magnitude | MaskKind::Complex => N_BINS,
        };
        let extractor = Extractor::new(input, m.blstm_hidden, m.embed_dim, config.fusion_kind, config.mask_kind, mask_bins);
        Ok(Self {
            config: config.clone(),
            upstream_dims: dims,
            frontend,
            spk,
            extractor,
        })
    }

    /// Initializes every parameter. A learnable frontend is fitted to
    /// `calibration` signals (synthetic speech when empty).
    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng, calibration: &[&[f64]]) -> Result<()> {
        if let Some(fe) = &self.frontend {
            if calibration.is_empty() {
                let synthetic = synthetic_calibration(rng.gen());
                let refs: Vec<&[f64]> = synthetic.iter().map(|v| v.as_slice()).collect();
                fe.init_paired(store, rng, &refs)?;
            } else {
                fe.init_paired(store, rng, calibration)?;
            }
        }
        match &self.spk {
            SpkEnc::Mhfa(m) => m.init(store, rng),
            SpkEnc::Blstm(b) => b.init(store, rng),
        }
        self.extractor.init(store, rng);
        if self.config.extractor_input == ExtractorInput::Ssl {
            let (l, _) = self.upstream_dims.expect("checked in new");
            store.insert(EXTRACTOR_LOGITS, Array2::zeros((1, l)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let fe = self.frontend.map_or(0, |f| 2 * f.filters * f.kernel);
        let spk = match &self.spk {
            SpkEnc::Mhfa(m) => m.param_count(),
            SpkEnc::Blstm(b) => b.param_count(),
        };
        let logits = match self.config.extractor_input {
            ExtractorInput::Ssl => self.upstream_dims.map_or(0, |d| d.0),
            ExtractorInput::Stft => 0,
        };
        fe + spk + self.extractor.param_count() + logits
    }

    /// Confirms that every expected tensor is present with the right shape.
    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        let mut fresh = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        if let Some(fe) = &self.frontend {
            fe.init(&mut fresh, &mut rng);
        }
        match &self.spk {
            SpkEnc::Mhfa(m) => m.init(&mut fresh, &mut rng),
            SpkEnc::Blstm(b) => b.init(&mut fresh, &mut rng),
        }
        self.extractor.init(&mut fresh, &mut rng);
        if let (ExtractorInput::Ssl, Some((l, _))) = (self.config.extractor_input, self.upstream_dims) {
            fresh.insert(EXTRACTOR_LOGITS, Array2::zeros((1, l)));
        }
        for (name, t) in fresh.iter() {
            match store.get(name) {
                None => return Err(Error::Config(format!("checkpoint lacks parameter {name}"))),
                Some(v) if v.dim() != t.dim() => {
                    return Err(Error::Config(format!("parameter {name} is {:?}, model expects {:?}", v.dim(), t.dim())))
                }
                _ => {}
            }
        }
        if store.len() != fresh.len() {
            return Err(Error::Config(format!("checkpoint has {} tensors, model expects {}", store.len(), fresh.len())));
        }
        Ok(())
    }

    fn encoder_frames(&self, length: usize) -> Result<usize> {
        match &self.frontend {
            Some(fe) => fe
                .frame_count(length)
                .ok_or_else(|| Error::Length(format!("learnable encoder needs at least {} samples, got {length}", fe.kernel))),
            None => {
                if length < crate::frontend::FFT_SIZE {
                    return Err(Error::Length(format!("STFT encoder needs at least 1024 samples, got {length}")));
                }
                Ok(stft_frame_count(length))
            }
        }
    }

    fn check_stack(&self, stack: Option<&FeatureStack>, what: &str) -> Result<()> {
        let (l, d) = self.upstream_dims.expect("ssl configs carry dims");
        let stack = stack.ok_or_else(|| Error::Config(format!("{what} upstream features are required by this config")))?;
        if stack.num_layers() != l || stack.dim() != d {
            return Err(Error::Config(format!(
                "{what} features are (L+1={}, D={}), model expects (L+1={l}, D={d})",
                stack.num_layers(),
                stack.dim()
            )));
        }
        if stack.frames() == 0 {
            return Err(Error::Degenerate(format!("{what} features have no frames")));
        }
        Ok(())
    }

    /// Precomputes spectra and aligned feature slices. `target` is needed
    /// only for training losses.
    pub fn prepare(
        &self,
        mixture: &AudioSignal,
        mix_stack: Option<&FeatureStack>,
        enrollment: &AudioSignal,
        enroll_stack: Option<&FeatureStack>,
        target: Option<&AudioSignal>,
    ) -> Result<Prepared> {
        let len = mixture.len();
        let mut frames = self.encoder_frames(len)?;
        let ssl_extractor = self.config.extractor_input == ExtractorInput::Ssl;
        if ssl_extractor {
            self.check_stack(mix_stack, "mixture")?;
            frames = frames.min(mix_stack.expect("checked").frames());
        }
        let needs_spec = self.frontend.is_none() || self.config.extractor_input == ExtractorInput::Stft;
        let (mut mix_re, mut mix_im, mut mix_mag) = (None, None, None);
        if needs_spec {
            let spec = stft_encode(mixture)?;
            let cut = |m: &Mat| Arc::new(m.slice(s![..frames, ..]).to_owned());
            mix_mag = Some(cut(&spec.magnitude()));
            mix_re = Some(cut(&spec.re));
            mix_im = Some(cut(&spec.im));
        }
        let mix_layers = ssl_extractor.then(|| truncate_layers(mix_stack.expect("checked"), frames));
        let (enroll_layers, enroll_mag) = match self.spk {
            SpkEnc::Mhfa(_) => {
                self.check_stack(enroll_stack, "enrollment")?;
                let st = enroll_stack.expect("checked");
                (Some(truncate_layers(st, st.frames())), None)
            }
            SpkEnc::Blstm(_) => (None, Some(Arc::new(stft_encode(enrollment)?.magnitude()))),
        };
        let (target_v, target_mag) = match target {
            None => (None, None),
            Some(t) => {
                if t.len() != len {
                    return Err(Error::Shape(format!("target has {} samples, mixture {len}", t.len())));
                }
                let mag = (self.config.loss_kind == LossKind::Mse)
                    .then(|| -> Result<Arc<Mat>> {
                        Ok(Arc::new(stft_encode(t)?.magnitude().slice(s![..frames, ..]).to_owned()))
                    })
                    .transpose()?;
                (Some(Arc::new(t.samples().to_vec())), mag)
            }
        };
        Ok(Prepared {
            mixture: Arc::new(mixture.samples().to_vec()),
            frames,
            mix_re,
            mix_im,
            mix_mag,
            mix_layers,
            enroll_layers,
            enroll_mag,
            target: target_v,
            target_mag,
        })
    }

    /// Speaker embedding as a `1 x E` row.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, p: &Prepared) -> Result<Var> {
        match &self.spk {
            SpkEnc::Mhfa(m) => m.forward(g, store, p.enroll_layers.as_ref().expect("prepared for MHFA")),
            SpkEnc::Blstm(b) => {
                let mag = g.constant_arc(Arc::clone(p.enroll_mag.as_ref().expect("prepared for BLSTM")));
                b.forward(g, store, mag)
            }
        }
    }

    /// Composed forward pass. With `unit_mask` the mask head is bypassed
    /// and replaced by the identity mask (diagnostic mode).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, p: &Prepared, unit_mask: bool) -> Result<TseOutput> {
        let t = p.frames;
        let mask = if unit_mask {
            let bins = self.extractor.mask_bins;
            let mut m = Mat::ones((t, self.extractor.head_width()));
            if self.config.mask_kind == MaskKind::Complex {
                m.slice_mut(s![.., bins..]).fill(0.0);
            }
            g.constant(m)
        } else {
            let e = self.embed(g, store, p)?;
            let features = match self.config.extractor_input {
                ExtractorInput::Ssl => {
                    let logits = store.var(g, EXTRACTOR_LOGITS);
                    g.layer_sum(Arc::clone(p.mix_layers.as_ref().expect("prepared")), logits)?
                }
                ExtractorInput::Stft => g.constant_arc(Arc::clone(p.mix_mag.as_ref().expect("prepared"))),
            };
            self.extractor.forward(g, store, features, e)?
        };
        let n = p.mixture.len();
        let (estimate, est_mag) = match (&self.frontend, self.config.mask_kind) {
            (Some(fe), _) => {
                let z = fe.encode(g, store, &p.mixture)?;
                let z = if g.value(z).nrows() > t { g.slice_rows(z, 0, t) } else { z };
                let zs = g.mul(mask, z);
                (fe.decode(g, store, zs, n)?, None)
            }
            (None, MaskKind::Complex) => {
                let re = g.constant_arc(Arc::clone(p.mix_re.as_ref().expect("prepared")));
                let im = g.constant_arc(Arc::clone(p.mix_im.as_ref().expect("prepared")));
                let bins = self.extractor.mask_bins;
                let mr = g.slice_cols(mask, 0, bins);
                let mi = g.slice_cols(mask, bins, bins);
                let (a, b) = (g.mul(mr, re), g.mul(mi, im));
                let sre = g.sub(a, b);
                let (c, d) = (g.mul(mr, im), g.mul(mi, re));
                let sim = g.add(c, d);
                (g.istft(sre, sim, n)?, None)
            }
            (None, _) => {
                let re = g.constant_arc(Arc::clone(p.mix_re.as_ref().expect("prepared")));
                let im = g.constant_arc(Arc::clone(p.mix_im.as_ref().expect("prepared")));
                let mag = g.constant_arc(Arc::clone(p.mix_mag.as_ref().expect("prepared")));
                let sre = g.mul(mask, re);
                let sim = g.mul(mask, im);
                let est_mag = g.mul(mask, mag);
                (g.istft(sre, sim, n)?, Some(est_mag))
            }
        };
        Ok(TseOutput {
            estimate,
            est_mag,
            mask,
        })
    }

    /// Training objective for `p` (which must carry its target).
    pub fn loss(&self, g: &mut Graph, store: &ParamStore, p: &Prepared) -> Result<Var> {
        let out = self.forward(g, store, p, false)?;
        let target = p.target.as_ref().ok_or_else(|| Error::Config("prepared sample has no target".into()))?;
        match self.config.loss_kind {
            LossKind::SiSdr => g.si_sdr_loss(out.estimate, target),
            LossKind::Mse => {
                let est = out.est_mag.ok_or_else(|| Error::Config("mse loss needs a magnitude mask".into()))?;
                g.mse_to(est, p.target_mag.as_ref().expect("prepared with target"))
            }
        }
    }

    /// Evaluation-mode waveform estimate, same length as the mixture.
    pub fn infer(&self, store: &ParamStore, p: &Prepared) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, p, false)?;
        Ok(g.value(out.estimate).iter().copied().collect())
    }

    /// Softmax-normalized `(spk_enc, extractor)` layer weights. The speaker
    /// row is the mean of MHFA's key and value distributions.
    pub fn layer_weights(&self, store: &ParamStore) -> Result<(Vec<f64>, Vec<f64>)> {
        let SpkEnc::Mhfa(m) = &self.spk else {
            return Err(Error::Config("speaker encoder does not use upstream layers".into()));
        };
        if self.config.extractor_input != ExtractorInput::Ssl {
            return Err(Error::Config("extractor does not use upstream layers".into()));
        }
        let (a, v) = m.layer_weights(store)?;
        let spk = a.iter().zip(&v).map(|(x, y)| 0.5 * (x + y)).collect();
        let ext = store
            .get(EXTRACTOR_LOGITS)
            .map(|l| softmax(&l.iter().copied().collect::<Vec<_>>()))
            .ok_or_else(|| Error::Config(format!("missing parameter {EXTRACTOR_LOGITS}")))?;
        Ok((spk, ext))
    }
}

/// A few seconds of two-speaker synthetic mixtures for frontend fitting.
fn synthetic_calibration(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..12)
        .map(|i| {
            let a = SpeakerProfile::random(format!("cal{i}a"), rng.gen());
            let b = SpeakerProfile::random(format!("cal{i}b"), rng.gen());
            let x = synth_utterance(&a, 1.5, rng.gen()).expect("valid duration");
            let y = synth_utterance(&b, 1.5, rng.gen()).expect("valid duration");
            mix_min(&x, &y, rng.gen_range(-5.0..5.0)).expect("nonsilent").mixture.into_samples()
        })
        .collect()
}

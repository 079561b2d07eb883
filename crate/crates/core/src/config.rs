//! Experiment description shared by the model, trainer and CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::FusionKind;
use crate::frontend::MaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Stft,
    Learnable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SiSdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpkEncKind {
    Mhfa,
    StftBlstm,
}

/// What the extractor's MixNet reads: the SSL layer sum or STFT magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorInput {
    Ssl,
    Stft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UpstreamConfig {
    Toy { seed: u64, layers: usize, dim: usize },
    /// Precomputed LFSC dumps mirroring the manifest's audio layout.
    Files { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    /// Hidden units per direction for MixNet and MaskNet.
    pub blstm_hidden: usize,
    pub encoder_filters: usize,
    pub embed_dim: usize,
    pub mhfa_heads: usize,
    pub mhfa_compress: usize,
    pub spk_blstm_hidden: usize,
    pub spk_blstm_layers: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            blstm_hidden: 512,
            encoder_filters: 512,
            embed_dim: 256,
            mhfa_heads: 4,
            mhfa_compress: 128,
            spk_blstm_hidden: 512,
            spk_blstm_layers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub crop_s: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            grad_clip: 5.0,
            batch_size: 8,
            epochs: 200,
            crop_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub encoder_kind: EncoderKind,
    pub mask_kind: MaskKind,
    pub fusion_kind: FusionKind,
    pub loss_kind: LossKind,
    pub spk_enc_kind: SpkEncKind,
    #[serde(default = "default_extractor_input")]
    pub extractor_input: ExtractorInput,
    pub upstream: UpstreamConfig,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_extractor_input() -> ExtractorInput {
    ExtractorInput::Ssl
}

impl RunConfig {
    /// One of the seven benchmark systems; all use multiplication fusion
    /// and the default toy upstream (L = 4, D = 192).
    pub fn preset(system: u8) -> Result<Self> {
        use EncoderKind::*;
        use ExtractorInput as X;
        use LossKind::*;
        use MaskKind::*;
        use SpkEncKind::*;
        let (enc, ext, spk, mask, loss) = match system {
            1 => (Stft, X::Stft, StftBlstm, Magnitude, Mse),
            2 => (Stft, X::Stft, Mhfa, Magnitude, Mse),
            3 => (Stft, X::Ssl, StftBlstm, Magnitude, Mse),
            4 => (Stft, X::Ssl, Mhfa, Magnitude, Mse),
            5 => (Stft, X::Ssl, Mhfa, Magnitude, SiSdr),
            6 => (Stft, X::Ssl, Mhfa, Complex, SiSdr),
            7 => (Learnable, X::Ssl, Mhfa, Encoder, SiSdr),
            other => return Err(Error::Config(format!("no preset for system {other} (expected 1-7)"))),
        };
        Ok(Self {
            encoder_kind: enc,
            mask_kind: mask,
            fusion_kind: FusionKind::Multiplication,
            loss_kind: loss,
            spk_enc_kind: spk,
            extractor_input: ext,
            upstream: UpstreamConfig::Toy {
                seed: 0,
                layers: 4,
                dim: 192,
            },
            model: ModelDims::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
        })
    }

    pub fn with_fusion(mut self, kind: FusionKind) -> Self {
        self.fusion_kind = kind;
        self
    }

    /// Whether any component reads upstream features.
    pub fn uses_ssl(&self) -> bool {
        self.spk_enc_kind == SpkEncKind::Mhfa || self.extractor_input == ExtractorInput::Ssl
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (self.encoder_kind, self.mask_kind) {
            (EncoderKind::Learnable, MaskKind::Encoder) | (EncoderKind::Stft, MaskKind::Magnitude | MaskKind::Complex) => {}
            (enc, mask) => return bad(format!("mask_kind {mask:?} is incompatible with encoder_kind {enc:?}")),
        }
        if self.loss_kind == LossKind::Mse && self.mask_kind != MaskKind::Magnitude {
            return bad("loss_kind mse requires mask_kind magnitude".into());
        }
        let m = &self.model;
        for (name, v) in [
            ("blstm_hidden", m.blstm_hidden),
            ("encoder_filters", m.encoder_filters),
            ("embed_dim", m.embed_dim),
            ("mhfa_heads", m.mhfa_heads),
            ("mhfa_compress", m.mhfa_compress),
            ("spk_blstm_hidden", m.spk_blstm_hidden),
            ("spk_blstm_layers", m.spk_blstm_layers),
        ] {
            if v == 0 {
                return bad(format!("model.{name} must be >= 1"));
            }
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return bad(format!("optimizer.lr must be positive, got {}", o.lr));
        }
        if !(o.grad_clip > 0.0) {
            return bad(format!("optimizer.grad_clip must be positive, got {}", o.grad_clip));
        }
        if o.batch_size == 0 || o.epochs == 0 {
            return bad("optimizer.batch_size and optimizer.epochs must be >= 1".into());
        }
        if !(o.crop_s >= 0.1) {
            return bad(format!("optimizer.crop_s must be >= 0.1 s, got {}", o.crop_s));
        }
        if let UpstreamConfig::Toy { layers, dim, .. } = self.upstream {
            if layers == 0 || dim == 0 {
                return bad("toy upstream needs layers >= 1 and dim >= 1".into());
            }
        }
        Ok(())
    }

    /// Parses JSON (unknown keys rejected) and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

//! MixNet -> fusion -> MaskNet mask estimation and the composed TSE model.

mod fusion;
mod model;

pub use fusion::{Fusion, FusionKind};
pub use model::{Prepared, TseModel, TseOutput};

use rand::Rng;

use crate::error::{Error, Result};
use crate::frontend::{MaskKind, MaskTensor};
use crate::nn::{init_uniform, Blstm, Graph, Mat, ParamStore, Var};
use crate::speaker::SpeakerEmbedding;

/// Mask estimator over `T x D` features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extractor {
    pub mixnet: Blstm,
    pub fusion: Fusion,
    pub masknet: Blstm,
    pub mask_kind: MaskKind,
    /// Mask channels per frame (bins or filters); complex doubles it.
    pub mask_bins: usize,
}

const HEAD_W: &str = "extractor.head.w";
const HEAD_B: &str = "extractor.head.b";
/// Head weights start this much smaller than the usual uniform bound so the
/// untrained model is close to a pass-through.
const HEAD_INIT_SCALE: f64 = 0.01;

impl Extractor {
    pub fn new(input: usize, hidden: usize, embed: usize, fusion: FusionKind, mask_kind: MaskKind, mask_bins: usize) -> Self {
        Self {
            mixnet: Blstm::new("extractor.mixnet", input, hidden, 1),
            fusion: Fusion::new(fusion, embed, 2 * hidden),
            masknet: Blstm::new("extractor.masknet", 2 * hidden, hidden, 2),
            mask_kind,
            mask_bins,
        }
    }

    pub fn head_width(&self) -> usize {
        match self.mask_kind {
            MaskKind::Complex => 2 * self.mask_bins,
            _ => self.mask_bins,
        }
    }

    /// Head bias starts at the identity mask: 1 for magnitude/encoder masks,
    /// (1, 0) for complex masks.
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        self.mixnet.init(store, rng);
        self.fusion.init(store, rng);
        self.masknet.init(store, rng);
        let fan_in = self.masknet.output_dim();
        let bound = HEAD_INIT_SCALE / (fan_in as f64).sqrt();
        store.insert(HEAD_W, init_uniform(rng, fan_in, self.head_width(), bound));
        let mut b = Mat::zeros((1, self.head_width()));
        b.slice_mut(ndarray::s![.., ..self.mask_bins]).fill(1.0);
        store.insert(HEAD_B, b);
    }

    pub fn param_count(&self) -> usize {
        self.mixnet.param_count()
            + self.fusion.param_count()
            + self.masknet.param_count()
            + (self.masknet.output_dim() + 1) * self.head_width()
    }

    /// `T x head_width` mask; ReLU for magnitude/encoder, linear for complex.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, features: Var, e: Var) -> Result<Var> {
        let (t, d) = g.value(features).dim();
        if t == 0 {
            return Err(Error::Degenerate("extractor over an empty (0-frame) input".into()));
        }
        if d != self.mixnet.input {
            return Err(Error::Shape(format!("extractor expects D={}, got {d}", self.mixnet.input)));
        }
        let z_mix = self.mixnet.forward(g, store, features);
        let z_f = self.fusion.forward(g, store, z_mix, e)?;
        let h = self.masknet.forward(g, store, z_f);
        let w = store.var(g, HEAD_W);
        let b = store.var(g, HEAD_B);
        let m = g.linear(h, w, Some(b));
        Ok(match self.mask_kind {
            MaskKind::Complex => m,
            MaskKind::Magnitude | MaskKind::Encoder => g.relu(m),
        })
    }
}

/// Plain-value mask estimation.
pub fn estimate_mask(extractor: &Extractor, store: &ParamStore, features: &Mat, e: &SpeakerEmbedding) -> Result<MaskTensor> {
    let mut g = Graph::new();
    let f = g.constant(features.clone());
    let ev = g.constant(Mat::from_shape_vec((1, e.dim()), e.values.clone()).expect("row"));
    let m = extractor.forward(&mut g, store, f, ev)?;
    let m = g.value(m);
    let n = extractor.mask_bins;
    Ok(match extractor.mask_kind {
        MaskKind::Complex => MaskTensor {
            kind: MaskKind::Complex,
            real: m.slice(ndarray::s![.., ..n]).to_owned(),
            imag: Some(m.slice(ndarray::s![.., n..]).to_owned()),
        },
        kind => MaskTensor {
            kind,
            real: m.clone(),
            imag: None,
        },
    })
}

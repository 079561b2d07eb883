use rand::Rng;

use super::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::frontend::Spectrogram;
use crate::nn::{init_uniform, Blstm, Graph, ParamStore, Var};

/// Baseline speaker encoder: BLSTM stack over STFT magnitudes, time mean,
/// linear projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StftSpeakerEncoder {
    pub prefix: String,
    pub bins: usize,
    pub blstm: Blstm,
    pub embed: usize,
}

impl StftSpeakerEncoder {
    pub fn new(prefix: impl Into<String>, bins: usize, hidden: usize, layers: usize, embed: usize) -> Self {
        let prefix = prefix.into();
        Self {
            blstm: Blstm::new(format!("{prefix}.blstm"), bins, hidden, layers),
            prefix,
            bins,
            embed,
        }
    }

    fn proj(&self, what: &str) -> String {
        format!("{}.proj.{what}", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        self.blstm.init(store, rng);
        let bound = 1.0 / (self.blstm.output_dim() as f64).sqrt();
        store.insert(&self.proj("w"), init_uniform(rng, self.blstm.output_dim(), self.embed, bound));
        store.insert(&self.proj("b"), init_uniform(rng, 1, self.embed, bound));
    }

    pub fn param_count(&self) -> usize {
        self.blstm.param_count() + (self.blstm.output_dim() + 1) * self.embed
    }

    /// `magnitude` is `T x F`; returns a `1 x E` row.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, magnitude: Var) -> Result<Var> {
        let (t, f) = g.value(magnitude).dim();
        if f != self.bins {
            return Err(Error::Shape(format!("speaker BLSTM expects {} bins, got {f}", self.bins)));
        }
        if t == 0 {
            return Err(Error::Degenerate("speaker BLSTM over an empty (0-frame) input".into()));
        }
        let h = self.blstm.forward(g, store, magnitude);
        let pooled = g.mean_rows(h);
        let w = store.var(g, &self.proj("w"));
        let b = store.var(g, &self.proj("b"));
        Ok(g.linear(pooled, w, Some(b)))
    }

    pub fn embed_spectrogram(&self, spec: &Spectrogram, store: &ParamStore) -> Result<SpeakerEmbedding> {
        let mut g = Graph::new();
        let m = g.constant(spec.magnitude());
        let e = self.forward(&mut g, store, m)?;
        SpeakerEmbedding::new(g.value(e).iter().copied().collect())
    }
}

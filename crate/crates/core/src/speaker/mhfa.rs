use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use super::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::nn::{init_uniform, Graph, Mat, ParamStore, Var};
use crate::upstream::{softmax, FeatureStack};

/// Multi-head factorized attentive pooling.
///
/// Keys and values come from two separate softmax layer sums; both are
/// compressed to `compress` channels, each head scores frames from the
/// compressed keys, and the per-head pooled values are concatenated and
/// projected to `embed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mhfa {
    pub prefix: String,
    pub num_layers: usize,
    pub dim: usize,
    pub compress: usize,
    pub heads: usize,
    pub embed: usize,
}

impl Mhfa {
    pub fn new(prefix: impl Into<String>, num_layers: usize, dim: usize, compress: usize, heads: usize, embed: usize) -> Self {
        Self {
            prefix: prefix.into(),
            num_layers,
            dim,
            compress,
            heads,
            embed,
        }
    }

    pub fn name(&self, what: &str) -> String {
        format!("{}.{what}", self.prefix)
    }

    pub fn att_logits(&self) -> String {
        self.name("att_logits")
    }

    pub fn feat_logits(&self) -> String {
        self.name("feat_logits")
    }

    /// Layer logits start at zero (uniform weights); maps are Uniform(±1/sqrt(fan_in)).
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        let n = self.num_layers;
        store.insert(&self.att_logits(), Array2::zeros((1, n)));
        store.insert(&self.feat_logits(), Array2::zeros((1, n)));
        let bd = 1.0 / (self.dim as f64).sqrt();
        store.insert(&self.name("key_compress"), init_uniform(rng, self.dim, self.compress, bd));
        store.insert(&self.name("value_compress"), init_uniform(rng, self.dim, self.compress, bd));
        let bc = 1.0 / (self.compress as f64).sqrt();
        store.insert(&self.name("head_map"), init_uniform(rng, self.compress, self.heads, bc));
        let bo = 1.0 / ((self.heads * self.compress) as f64).sqrt();
        store.insert(&self.name("out_proj.w"), init_uniform(rng, self.heads * self.compress, self.embed, bo));
        store.insert(&self.name("out_proj.b"), init_uniform(rng, 1, self.embed, bo));
    }

    pub fn param_count(&self) -> usize {
        2 * self.num_layers
            + 2 * self.dim * self.compress
            + self.compress * self.heads
            + self.heads * self.compress * self.embed
            + self.embed
    }

    fn check(&self, layers: &[Mat]) -> Result<()> {
        if layers.len() != self.num_layers {
            return Err(Error::Shape(format!("MHFA built for {} layers, got {}", self.num_layers, layers.len())));
        }
        let (t, d) = layers[0].dim();
        if t == 0 {
            return Err(Error::Degenerate("MHFA over an empty (0-frame) input".into()));
        }
        if d != self.dim {
            return Err(Error::Shape(format!("MHFA built for D={}, got D={d}", self.dim)));
        }
        Ok(())
    }

    /// Per-head attention over frames, `T x H` (columns sum to one).
    pub fn attention(&self, g: &mut Graph, store: &ParamStore, layers: &Arc<Vec<Mat>>) -> Result<Var> {
        self.check(layers)?;
        let att = store.var(g, &self.att_logits());
        let k = g.layer_sum(Arc::clone(layers), att)?;
        let kc = store.var(g, &self.name("key_compress"));
        let k = g.matmul(k, kc);
        let hm = store.var(g, &self.name("head_map"));
        let scores = g.matmul(k, hm);
        Ok(g.softmax_over_rows(scores))
    }

    /// Embedding as a `1 x E` row.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, layers: &Arc<Vec<Mat>>) -> Result<Var> {
        let a = self.attention(g, store, layers)?;
        let feat = store.var(g, &self.feat_logits());
        let v = g.layer_sum(Arc::clone(layers), feat)?;
        let vc = store.var(g, &self.name("value_compress"));
        let v = g.matmul(v, vc);
        let at = g.transpose(a);
        let pooled = g.matmul(at, v);
        let flat = g.reshape(pooled, 1, self.heads * self.compress);
        let w = store.var(g, &self.name("out_proj.w"));
        let b = store.var(g, &self.name("out_proj.b"));
        Ok(g.linear(flat, w, Some(b)))
    }

    /// Normalized `(attention, value)` layer weights.
    pub fn layer_weights(&self, store: &ParamStore) -> Result<(Vec<f64>, Vec<f64>)> {
        let get = |n: String| -> Result<Vec<f64>> {
            store
                .get(&n)
                .map(|m| softmax(&m.iter().copied().collect::<Vec<_>>()))
                .ok_or_else(|| Error::Config(format!("missing parameter {n}")))
        };
        Ok((get(self.att_logits())?, get(self.feat_logits())?))
    }
}

pub fn mhfa_embed(stack: &FeatureStack, mhfa: &Mhfa, store: &ParamStore) -> Result<SpeakerEmbedding> {
    let layers = Arc::new(stack.layers_f64());
    let mut g = Graph::new();
    let e = mhfa.forward(&mut g, store, &layers)?;
    SpeakerEmbedding::new(g.value(e).iter().copied().collect())
}

pub fn mhfa_attention(stack: &FeatureStack, mhfa: &Mhfa, store: &ParamStore) -> Result<Mat> {
    let layers = Arc::new(stack.layers_f64());
    let mut g = Graph::new();
    let a = mhfa.attention(&mut g, store, &layers)?;
    Ok(g.value(a).clone())
}

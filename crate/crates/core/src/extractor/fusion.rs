use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_uniform, Graph, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Addition,
    Multiplication,
    Concatenation,
    Film,
}

impl FusionKind {
    pub const ALL: [FusionKind; 4] = [Self::Addition, Self::Multiplication, Self::Concatenation, Self::Film];

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown fusion kind {s:?}")))
    }
}

/// Conditions `T x W` MixNet output on a `1 x E` embedding. The projected
/// embedding is broadcast over all frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fusion {
    pub kind: FusionKind,
    pub embed: usize,
    pub width: usize,
}

const PREFIX: &str = "extractor.fusion";

fn name(what: &str) -> String {
    format!("{PREFIX}.{what}")
}

impl Fusion {
    pub fn new(kind: FusionKind, embed: usize, width: usize) -> Self {
        Self { kind, embed, width }
    }

    /// `(name, rows, cols)` of every map the kind needs.
    fn shapes(&self) -> Vec<(String, usize, usize)> {
        let (e, w) = (self.embed, self.width);
        let lin = |n: &str, i: usize, o: usize| vec![(name(&format!("{n}.w")), i, o), (name(&format!("{n}.b")), 1, o)];
        match self.kind {
            FusionKind::Addition | FusionKind::Multiplication => lin("embed_proj", e, w),
            FusionKind::Concatenation => [lin("embed_proj", e, w), lin("concat_reduce", 2 * w, w)].concat(),
            FusionKind::Film => [lin("film_proj1", e, w), lin("film_proj2", e, w)].concat(),
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for (n, rows, cols) in self.shapes() {
            let fan_in = if rows == 1 { self.embed } else { rows };
            store.insert(&n, init_uniform(rng, rows, cols, 1.0 / (fan_in as f64).sqrt()));
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(_, r, c)| r * c).sum()
    }

    fn project(&self, g: &mut Graph, store: &ParamStore, e: Var, which: &str) -> Var {
        let w = store.var(g, &name(&format!("{which}.w")));
        let b = store.var(g, &name(&format!("{which}.b")));
        g.linear(e, w, Some(b))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z_mix: Var, e: Var) -> Result<Var> {
        let (t, w) = g.value(z_mix).dim();
        if w != self.width {
            return Err(Error::Shape(format!("fusion expects width {}, got {w}", self.width)));
        }
        if g.value(e).dim() != (1, self.embed) {
            return Err(Error::Shape(format!("fusion expects a 1x{} embedding, got {:?}", self.embed, g.value(e).dim())));
        }
        Ok(match self.kind {
            FusionKind::Addition => {
                let p = self.project(g, store, e, "embed_proj");
                g.add_row(z_mix, p)
            }
            FusionKind::Multiplication => {
                let p = self.project(g, store, e, "embed_proj");
                g.mul_row(z_mix, p)
            }
            FusionKind::Concatenation => {
                let p = self.project(g, store, e, "embed_proj");
                let ones = g.constant(Array2::ones((t, 1)));
                let tiled = g.matmul(ones, p);
                let cat = g.concat_cols(z_mix, tiled);
                let rw = store.var(g, &name("concat_reduce.w"));
                let rb = store.var(g, &name("concat_reduce.b"));
                g.linear(cat, rw, Some(rb))
            }
            FusionKind::Film => {
                let e1 = self.project(g, store, e, "film_proj1");
                let e2 = self.project(g, store, e, "film_proj2");
                let scaled = g.mul_row(z_mix, e1);
                g.add_row(scaled, e2)
            }
        })
    }
}

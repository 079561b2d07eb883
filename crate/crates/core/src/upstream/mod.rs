//! Frozen layer-wise feature providers and the learnable softmax layer sum.

mod layer_sum;
mod lfsc;
mod toy;

pub use layer_sum::{softmax, weighted_layer_sum, LayerWeights};
pub use lfsc::{load_features, store_features};
pub use toy::ToyUpstream;

use ndarray::{s, Array3, Axis};

use crate::error::{Error, Result};
use crate::nn::Mat;

/// `(L+1) x T' x D` layer outputs; index 0 is the pre-transformer output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layers: Array3<f32>,
    pub frame_hop: u32,
    pub source_length: u64,
}

impl FeatureStack {
    pub fn new(layers: Array3<f32>, frame_hop: u32, source_length: u64) -> Result<Self> {
        let (l, _, _) = layers.dim();
        if l < 2 {
            return Err(Error::Shape(format!("feature stack needs L >= 1, got {} layers", l)));
        }
        if layers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite feature value".into()));
        }
        Ok(Self {
            layers,
            frame_hop,
            source_length,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.dim().0
    }

    pub fn frames(&self) -> usize {
        self.layers.dim().1
    }

    pub fn dim(&self) -> usize {
        self.layers.dim().2
    }

    pub fn layer(&self, l: usize) -> Mat {
        self.layers.index_axis(Axis(0), l).mapv(f64::from)
    }

    pub fn layers_f64(&self) -> Vec<Mat> {
        (0..self.num_layers()).map(|l| self.layer(l)).collect()
    }

    /// Frames `[start, start + len)` of every layer.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames() || len == 0 {
            return Err(Error::Length(format!(
                "frames [{start}, {}) outside stack of {} frames",
                start + len,
                self.frames()
            )));
        }
        Ok(Self {
            layers: self.layers.slice(s![.., start..start + len, ..]).to_owned(),
            frame_hop: self.frame_hop,
            source_length: (len as u64) * self.frame_hop as u64,
        })
    }

    /// Reorders frames: output frame `i` is input frame `order[i]`.
    pub fn permute_frames(&self, order: &[usize]) -> Self {
        Self {
            layers: self.layers.select(Axis(1), order),
            ..self.clone()
        }
    }
}

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::FeatureStack;
use crate::error::{Error, Result};
use crate::nn::{Graph, Mat, Var};

/// Learnable logits over the `L + 1` upstream layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub logits: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(num_layers: usize) -> Self {
        Self {
            logits: vec![0.0; num_layers],
        }
    }

    pub fn normalized(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `sum_l softmax(logits)_l * layers[l]`.
pub fn weighted_layer_sum(stack: &FeatureStack, weights: &LayerWeights) -> Result<Mat> {
    if weights.logits.len() != stack.num_layers() {
        return Err(Error::Shape(format!(
            "{} layer logits for a stack of {} layers",
            weights.logits.len(),
            stack.num_layers()
        )));
    }
    let w = weights.normalized();
    let mut out = Array2::zeros((stack.frames(), stack.dim()));
    for (l, wl) in w.iter().enumerate() {
        out.scaled_add(*wl, &stack.layer(l));
    }
    Ok(out)
}

impl Graph {
    /// Differentiable layer sum with `logits` a 1 x (L+1) row.
    pub fn layer_sum(&mut self, layers: Arc<Vec<Mat>>, logits: Var) -> Result<Var> {
        let n = self.value(logits).len();
        if n != layers.len() {
            return Err(Error::Shape(format!("{n} layer logits for {} layers", layers.len())));
        }
        let w = softmax(&self.value(logits).iter().copied().collect::<Vec<_>>());
        let mut out = Array2::zeros(layers[0].dim());
        for (x, wl) in layers.iter().zip(&w) {
            out.scaled_add(*wl, x);
        }
        Ok(self.custom(
            out,
            &[logits],
            Box::new(move |g, _, _| {
                let dw: Vec<f64> = layers.iter().map(|x| (g * x).sum()).collect();
                let mean: f64 = dw.iter().zip(&w).map(|(d, w)| d * w).sum();
                let d = Array2::from_shape_fn((1, w.len()), |(_, l)| w[l] * (dw[l] - mean));
                vec![Some(d)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack(seed: u64, l: usize, t: usize, d: usize) -> FeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStack::new(Array3::from_shape_fn((l, t, d), |_| rng.gen_range(-2.0f32..2.0)), 320, (t * 320) as u64)
            .unwrap()
    }

    #[test]
    fn zero_logits_average_layers() {
        let s = stack(1, 4, 6, 5);
        let out = weighted_layer_sum(&s, &LayerWeights::zeros(4)).unwrap();
        let mean = (s.layer(0) + s.layer(1) + s.layer(2) + s.layer(3)) / 4.0;
        assert!((out - mean).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn saturated_logit_selects_layer() {
        let s = stack(2, 5, 4, 3);
        let mut w = LayerWeights::zeros(5);
        w.logits[3] = 20.0;
        let out = weighted_layer_sum(&s, &w).unwrap();
        assert!((out - s.layer(3)).iter().all(|v| v.abs() < 1e-6 * 10.0));
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let s = stack(3, 3, 4, 2);
        assert!(matches!(weighted_layer_sum(&s, &LayerWeights::zeros(4)), Err(Error::Shape(_))));
    }

    #[test]
    fn logits_gradient_matches_finite_differences() {
        let s = stack(4, 4, 5, 3);
        let layers = Arc::new(s.layers_f64());
        let probe = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.37);
        let f = |logits: &[f64]| -> (f64, Vec<f64>) {
            let mut g = Graph::new();
            let lv = g.param("w", Arc::new(Array2::from_shape_vec((1, 4), logits.to_vec()).unwrap()));
            let out = g.layer_sum(Arc::clone(&layers), lv).unwrap();
            let pv = g.constant(probe.clone());
            let p = g.mul(out, pv);
            let loss = g.sum(p);
            let grads = g.backward(loss);
            (g.value(loss)[[0, 0]], g.param_grads(&grads)["w"].iter().copied().collect())
        };
        let logits = [0.3, -1.2, 0.8, 0.1];
        let (_, ana) = f(&logits);
        for i in 0..4 {
            let mut p = logits;
            p[i] += 1e-6;
            let mut m = logits;
            m[i] -= 1e-6;
            let num = (f(&p).0 - f(&m).0) / 2e-6;
            assert!((num - ana[i]).abs() < 1e-7, "{i}: {num} vs {}", ana[i]);
        }
    }
}

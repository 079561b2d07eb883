use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::{Graph, Mat, Var};

struct Forward {
    loss: f64,
    /// `dL/dcos_j`
    dcos: Vec<f64>,
    e_hat: Vec<f64>,
    e_norm: f64,
    w_hat: Mat,
    w_norm: Vec<f64>,
}

fn forward(e: &[f64], w: &Mat, label: usize, s: f64, m: f64) -> Result<Forward> {
    let (c, d) = w.dim();
    if e.len() != d {
        return Err(Error::Shape(format!("embedding dim {} vs class weights {c}x{d}", e.len())));
    }
    if label >= c {
        return Err(Error::Shape(format!("label {label} with only {c} classes")));
    }
    let e_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e_norm == 0.0 {
        return Err(Error::Normalization("zero-norm embedding".into()));
    }
    let w_norm: Vec<f64> = w.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
    if let Some(j) = w_norm.iter().position(|&n| n == 0.0) {
        return Err(Error::Normalization(format!("zero-norm class row {j}")));
    }
    let e_hat: Vec<f64> = e.iter().map(|v| v / e_norm).collect();
    let w_hat = Array2::from_shape_fn((c, d), |(j, k)| w[[j, k]] / w_norm[j]);
    let cos: Vec<f64> = w_hat.axis_iter(Axis(0)).map(|r| r.iter().zip(&e_hat).map(|(a, b)| a * b).sum()).collect();
    let z: Vec<f64> = cos
        .iter()
        .enumerate()
        .map(|(j, &cj)| s * (cj - if j == label { m } else { 0.0 }))
        .collect();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let total: f64 = exps.iter().sum();
    // log(sum exp(z)) - z_y, rearranged to stay accurate when the loss is tiny
    let others: f64 = exps.iter().enumerate().filter(|(j, _)| *j != label).map(|(_, v)| v).sum();
    let loss = (others / exps[label]).ln_1p();
    let dcos = exps
        .iter()
        .enumerate()
        .map(|(j, v)| s * (v / total - if j == label { 1.0 } else { 0.0 }))
        .collect();
    Ok(Forward {
        loss,
        dcos,
        e_hat,
        e_norm,
        w_hat,
        w_norm,
    })
}

/// Additive-margin softmax cross-entropy over scaled cosine logits.
pub fn am_softmax_loss(e: &[f64], class_weights: &Mat, label: usize, s: f64, m: f64) -> Result<f64> {
    Ok(forward(e, class_weights, label, s, m)?.loss)
}

/// Gradient through `x / |x|` given the gradient with respect to the unit vector.
fn unnormalize(g: &[f64], unit: &[f64], norm: f64) -> Vec<f64> {
    let dot: f64 = g.iter().zip(unit).map(|(a, b)| a * b).sum();
    g.iter().zip(unit).map(|(gi, ui)| (gi - dot * ui) / norm).collect()
}

impl Graph {
    /// `e` is `1 x E`, `w` is `C x E`; returns the 1 x 1 loss.
    pub fn am_softmax(&mut self, e: Var, w: Var, label: usize, s: f64, m: f64) -> Result<Var> {
        let ev: Vec<f64> = self.value(e).iter().copied().collect();
        let f = forward(&ev, self.value(w), label, s, m)?;
        let loss = Array2::from_elem((1, 1), f.loss);
        Ok(self.custom(
            loss,
            &[e, w],
            Box::new(move |g, _, need| {
                let scale = g[[0, 0]];
                let (c, d) = f.w_hat.dim();
                let de = need[0].then(|| {
                    let ge: Vec<f64> = (0..d)
                        .map(|k| (0..c).map(|j| f.dcos[j] * f.w_hat[[j, k]]).sum::<f64>() * scale)
                        .collect();
                    Array2::from_shape_vec((1, d), unnormalize(&ge, &f.e_hat, f.e_norm)).unwrap()
                });
                let dw = need[1].then(|| {
                    let mut out = Array2::zeros((c, d));
                    for j in 0..c {
                        let gw: Vec<f64> = f.e_hat.iter().map(|v| v * f.dcos[j] * scale).collect();
                        let unit: Vec<f64> = f.w_hat.row(j).to_vec();
                        for (k, v) in unnormalize(&gw, &unit, f.w_norm[j]).into_iter().enumerate() {
                            out[[j, k]] = v;
                        }
                    }
                    out
                });
                vec![de, dw]
            }),
        ))
    }
}

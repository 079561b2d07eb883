use std::f64::consts::LN_10;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{Graph, Mat, Var};

pub const SI_SDR_CAP_DB: f64 = 100.0;
/// Relative floor added to the error energy.
const EPS_REL: f64 = 1e-12;

struct Parts {
    value: f64,
    capped: bool,
    alpha: f64,
    e_t: f64,
    e_n: f64,
    s: Vec<f64>,
    x: Vec<f64>,
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn parts(estimate: &[f64], reference: &[f64]) -> Result<Parts> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "SI-SDR length mismatch: estimate {} vs reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::Degenerate("SI-SDR of empty signals".into()));
    }
    let s = centered(reference);
    let x = centered(estimate);
    let ss = dot(&s, &s);
    if ss == 0.0 {
        return Err(Error::Degenerate("SI-SDR reference is silent".into()));
    }
    let alpha = dot(&x, &s) / ss;
    let e_t = alpha * alpha * ss;
    let e_n: f64 = s.iter().zip(&x).map(|(si, xi)| (alpha * si - xi).powi(2)).sum();
    let (value, capped) = if e_t == 0.0 {
        (-SI_SDR_CAP_DB, true)
    } else {
        let v = 10.0 * (e_t / (e_n + EPS_REL * e_t)).log10();
        if v >= SI_SDR_CAP_DB {
            (SI_SDR_CAP_DB, true)
        } else {
            (v, false)
        }
    };
    Ok(Parts {
        value,
        capped,
        alpha,
        e_t,
        e_n,
        s,
        x,
    })
}

/// Scale-invariant SDR in dB of `estimate` against `reference` (both
/// mean-removed), capped at +100 dB.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(parts(estimate, reference)?.value)
}

/// Negative SI-SDR, `-si_sdr`.
pub fn si_sdr_loss(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(-si_sdr(estimate, reference)?)
}

/// `si_sdr(estimate) - si_sdr(mixture)`, all trimmed to the shortest length.
pub fn si_sdri(estimate: &[f64], reference: &[f64], mixture: &[f64]) -> Result<f64> {
    let n = estimate.len().min(reference.len()).min(mixture.len());
    Ok(si_sdr(&estimate[..n], &reference[..n])? - si_sdr(&mixture[..n], &reference[..n])?)
}

/// Mean squared difference of two equally shaped magnitude arrays.
pub fn spectral_mse(est_mag: &Mat, ref_mag: &Mat) -> Result<f64> {
    if est_mag.dim() != ref_mag.dim() {
        return Err(Error::Shape(format!("spectral MSE shapes {:?} vs {:?}", est_mag.dim(), ref_mag.dim())));
    }
    if est_mag.is_empty() {
        return Err(Error::Degenerate("spectral MSE of empty arrays".into()));
    }
    Ok(est_mag.iter().zip(ref_mag).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / est_mag.len() as f64)
}

impl Graph {
    /// Negative SI-SDR of a `1 x N` estimate row against a fixed reference.
    pub fn si_sdr_loss(&mut self, estimate: Var, reference: &[f64]) -> Result<Var> {
        let est: Vec<f64> = self.value(estimate).iter().copied().collect();
        let p = parts(&est, reference)?;
        let out = Array2::from_elem((1, 1), -p.value);
        let n = est.len();
        Ok(self.custom(
            out,
            &[estimate],
            Box::new(move |g, _, _| {
                if p.capped {
                    return vec![Some(Array2::zeros((1, n)))];
                }
                let denom = p.e_n + EPS_REL * p.e_t;
                let c = -10.0 / LN_10 * g[[0, 0]];
                let d = Array2::from_shape_fn((1, n), |(_, i)| {
                    let de_t = 2.0 * p.alpha * p.s[i];
                    let de_n = 2.0 * (p.x[i] - p.alpha * p.s[i]);
                    c * (de_t / p.e_t - (de_n + EPS_REL * de_t) / denom)
                });
                vec![Some(d)]
            }),
        ))
    }

    /// Mean squared difference against a fixed target of the same shape.
    pub fn mse_to(&mut self, estimate: Var, target: &Mat) -> Result<Var> {
        if self.value(estimate).dim() != target.dim() {
            return Err(Error::Shape(format!(
                "spectral MSE shapes {:?} vs {:?}",
                self.value(estimate).dim(),
                target.dim()
            )));
        }
        let t = self.constant(target.clone());
        let diff = self.sub(estimate, t);
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }
}

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::graph::{Graph, Mat, Var};
use super::ops::sigmoid;
use super::params::{init_uniform, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    pub input: usize,
    pub hidden: usize,
}

struct LstmTrace {
    /// activated gates per step, columns [i | f | g | o]
    gates: Mat,
    cells: Mat,
    hidden: Mat,
}

/// Gate order in the 4H axis is input, forget, cell, output.
fn lstm_forward(x: &Mat, w_ih: &Mat, w_hh: &Mat, b: &Mat, reverse: bool) -> LstmTrace {
    let (t_len, _) = x.dim();
    let h = w_hh.nrows();
    let zx = x.dot(w_ih) + b;
    let whh_t = w_hh.t().as_standard_layout().into_owned();
    let mut gates = Array2::zeros((t_len, 4 * h));
    let mut cells = Array2::zeros((t_len, h));
    let mut hidden = Array2::zeros((t_len, h));
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        let z = &zx.row(t) + &whh_t.dot(&h_prev);
        let mut gate_row = gates.row_mut(t);
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let gg = z[2 * h + j].tanh();
            let o = sigmoid(z[3 * h + j]);
            gate_row[j] = i;
            gate_row[h + j] = f;
            gate_row[2 * h + j] = gg;
            gate_row[3 * h + j] = o;
            let c = f * c_prev[j] + i * gg;
            c_prev[j] = c;
            h_prev[j] = o * c.tanh();
        }
        cells.row_mut(t).assign(&c_prev);
        hidden.row_mut(t).assign(&h_prev);
    }
    LstmTrace {
        gates,
        cells,
        hidden,
    }
}

impl Graph {
    /// Single-direction LSTM over the rows of `x` (T x I). `w_ih`: I x 4H,
    /// `w_hh`: H x 4H, `b`: 1 x 4H. Output T x H in input time order.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var, reverse: bool) -> Var {
        let trace = lstm_forward(self.value(x), self.value(w_ih), self.value(w_hh), self.value(b), reverse);
        let out = trace.hidden.clone();
        let trace = Arc::new(trace);
        self.custom(
            out,
            &[x, w_ih, w_hh, b],
            Box::new(move |g, inp, need| {
                let (x, w_ih, w_hh) = (&inp[0], &inp[1], &inp[2]);
                let t_len = x.nrows();
                let h = w_hh.nrows();
                let tr = &*trace;
                let mut dz = Array2::<f64>::zeros((t_len, 4 * h));
                let mut h_prev_rows = Array2::<f64>::zeros((t_len, h));
                let mut dh_next = Array1::<f64>::zeros(h);
                let mut dc_next = Array1::<f64>::zeros(h);
                for step in (0..t_len).rev() {
                    let t = if reverse { t_len - 1 - step } else { step };
                    let prev = if step == 0 {
                        None
                    } else if reverse {
                        Some(t + 1)
                    } else {
                        Some(t - 1)
                    };
                    let gates = tr.gates.row(t);
                    let c = tr.cells.row(t);
                    let mut dz_row = dz.row_mut(t);
                    for j in 0..h {
                        let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                        let tc = c[j].tanh();
                        let dh = g[[t, j]] + dh_next[j];
                        let c_prev = prev.map_or(0.0, |p| tr.cells[[p, j]]);
                        let d_o = dh * tc;
                        let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                        dc_next[j] = dc * f;
                        dz_row[j] = dc * gg * i * (1.0 - i);
                        dz_row[h + j] = dc * c_prev * f * (1.0 - f);
                        dz_row[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dz_row[3 * h + j] = d_o * o * (1.0 - o);
                    }
                    if let Some(p) = prev {
                        h_prev_rows.row_mut(t).assign(&tr.hidden.row(p));
                    }
                    dh_next = w_hh.dot(&dz.row(t));
                }
                vec![
                    need[0].then(|| dz.dot(&w_ih.t())),
                    need[1].then(|| x.t().dot(&dz)),
                    need[2].then(|| h_prev_rows.t().dot(&dz)),
                    need[3].then(|| dz.sum_axis(Axis(0)).insert_axis(Axis(0))),
                ]
            }),
        )
    }
}

/// Stack of bidirectional LSTM layers; each layer emits T x 2H.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blstm {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Blstm {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize, layers: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
            layers,
        }
    }

    fn name(&self, layer: usize, dir: &str, what: &str) -> String {
        format!("{}.l{layer}.{dir}.{what}", self.prefix)
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) for every weight and bias.
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        for layer in 0..self.layers {
            let input = if layer == 0 { self.input } else { 2 * self.hidden };
            for dir in ["fwd", "bwd"] {
                store.insert(&self.name(layer, dir, "w_ih"), init_uniform(rng, input, 4 * self.hidden, bound));
                store.insert(&self.name(layer, dir, "w_hh"), init_uniform(rng, self.hidden, 4 * self.hidden, bound));
                store.insert(&self.name(layer, dir, "b"), init_uniform(rng, 1, 4 * self.hidden, bound));
            }
        }
    }

    pub fn param_count(&self) -> usize {
        (0..self.layers)
            .map(|l| {
                let input = if l == 0 { self.input } else { 2 * self.hidden };
                2 * (input * 4 * self.hidden + self.hidden * 4 * self.hidden + 4 * self.hidden)
            })
            .sum()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut cur = x;
        for layer in 0..self.layers {
            let mut outs = Vec::with_capacity(2);
            for (dir, reverse) in [("fwd", false), ("bwd", true)] {
                let w_ih = store.var(g, &self.name(layer, dir, "w_ih"));
                let w_hh = store.var(g, &self.name(layer, dir, "w_hh"));
                let b = store.var(g, &self.name(layer, dir, "b"));
                outs.push(g.lstm(cur, w_ih, w_hh, b, reverse));
            }
            cur = g.concat_cols(outs[0], outs[1]);
        }
        cur
    }
}

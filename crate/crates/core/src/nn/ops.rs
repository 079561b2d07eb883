use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::graph::{Graph, Mat, Var};

fn sum_rows(m: &Mat) -> Mat {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl Graph {
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.custom(
            out,
            &[a, b],
            Box::new(|g, x, need| {
                vec![
                    need[0].then(|| g.dot(&x[1].t())),
                    need[1].then(|| x[0].t().dot(g)),
                ]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape");
        let out = self.value(a) + self.value(b);
        self.custom(
            out,
            &[a, b],
            Box::new(|g, _, need| vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())]),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape");
        let out = self.value(a) - self.value(b);
        self.custom(
            out,
            &[a, b],
            Box::new(|g, _, need| vec![need[0].then(|| g.clone()), need[1].then(|| -g)]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape");
        let out = self.value(a) * self.value(b);
        self.custom(
            out,
            &[a, b],
            Box::new(|g, x, need| {
                vec![need[0].then(|| g * &*x[1]), need[1].then(|| g * &*x[0])]
            }),
        )
    }

    /// `a + row`, with a 1 x C row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a 1 x C row");
        let out = self.value(a) + self.value(row);
        self.custom(
            out,
            &[a, row],
            Box::new(|g, _, need| vec![need[0].then(|| g.clone()), need[1].then(|| sum_rows(g))]),
        )
    }

    /// `a * row` elementwise with a 1 x C row broadcast over every row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "mul_row expects a 1 x C row");
        let out = self.value(a) * self.value(row);
        self.custom(
            out,
            &[a, row],
            Box::new(|g, x, need| {
                vec![
                    need[0].then(|| g * &*x[1]),
                    need[1].then(|| sum_rows(&(g * &*x[0]))),
                ]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.custom(out, &[a], Box::new(move |g, _, _| vec![Some(g * c)]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.custom(
            out,
            &[a],
            Box::new(|g, x, _| {
                let mut d = g.clone();
                d.zip_mut_with(&x[0], |d, &v| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                });
                vec![Some(d)]
            }),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        let y = Arc::new(out.clone());
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let mut d = g.clone();
                d.zip_mut_with(&y, |d, &y| *d *= 1.0 - y * y);
                vec![Some(d)]
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        let y = Arc::new(out.clone());
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let mut d = g.clone();
                d.zip_mut_with(&y, |d, &y| *d *= y * (1.0 - y));
                vec![Some(d)]
            }),
        )
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v * v);
        self.custom(out, &[a], Box::new(|g, x, _| vec![Some(g * &*x[0] * 2.0)]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.value(a).dim();
        assert_eq!(ra, self.value(b).nrows(), "concat_cols rows");
        let out = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        self.custom(
            out,
            &[a, b],
            Box::new(move |g, _, need| {
                vec![
                    need[0].then(|| g.slice(s![.., ..ca]).to_owned()),
                    need[1].then(|| g.slice(s![.., ca..]).to_owned()),
                ]
            }),
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (rows, cols) = self.value(a).dim();
        assert!(start + len <= rows, "slice_rows out of bounds");
        let out = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let mut d = Array2::zeros((rows, cols));
                d.slice_mut(s![start..start + len, ..]).assign(g);
                vec![Some(d)]
            }),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (rows, cols) = self.value(a).dim();
        assert!(start + len <= cols, "slice_cols out of bounds");
        let out = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let mut d = Array2::zeros((rows, cols));
                d.slice_mut(s![.., start..start + len]).assign(g);
                vec![Some(d)]
            }),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().as_standard_layout().into_owned();
        self.custom(
            out,
            &[a],
            Box::new(|g, _, _| vec![Some(g.t().as_standard_layout().into_owned())]),
        )
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (r0, c0) = self.value(a).dim();
        assert_eq!(r0 * c0, rows * cols, "reshape size");
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), flat).expect("size checked");
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let flat: Vec<f64> = g.iter().copied().collect();
                vec![Some(Array2::from_shape_vec((r0, c0), flat).expect("size checked"))]
            }),
        )
    }

    /// Softmax over rows (axis 0) independently for every column.
    pub fn softmax_over_rows(&mut self, a: Var) -> Var {
        let out = softmax_axis0(self.value(a));
        let y = Arc::new(out.clone());
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let dot = (g * &*y).sum_axis(Axis(0));
                let d = &*y * &(g - &dot.insert_axis(Axis(0)));
                vec![Some(d)]
            }),
        )
    }

    /// Column means as a 1 x C row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let rows = self.value(a).nrows();
        assert!(rows > 0, "mean_rows of empty matrix");
        let out = self.value(a).mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| {
                let row = g / rows as f64;
                vec![Some(row.broadcast((rows, g.ncols())).unwrap().to_owned())]
            }),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let dim = self.value(a).dim();
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.custom(
            out,
            &[a],
            Box::new(move |g, _, _| vec![Some(Array2::from_elem(dim, g[[0, 0]]))]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `x W + b` with `W` in x `in x out` layout and `b` a 1 x out row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let y = self.matmul(x, w);
        match b {
            Some(b) => self.add_row(y, b),
            None => y,
        }
    }

    /// Overlap-add of `frames` (T x K) at `hop`, cut or zero-extended to `length`.
    pub fn overlap_add(&mut self, frames: Var, hop: usize, length: usize) -> Var {
        let (t, k) = self.value(frames).dim();
        let out = overlap_add(self.value(frames), hop, length);
        self.custom(
            out,
            &[frames],
            Box::new(move |g, _, _| {
                let mut d = Array2::zeros((t, k));
                for ti in 0..t {
                    let start = ti * hop;
                    for ki in 0..k {
                        let n = start + ki;
                        if n >= length {
                            break;
                        }
                        d[[ti, ki]] = g[[0, n]];
                    }
                }
                vec![Some(d)]
            }),
        )
    }
}

pub fn overlap_add(frames: &Mat, hop: usize, length: usize) -> Mat {
    let (t, k) = frames.dim();
    let mut out = Array2::zeros((1, length));
    for ti in 0..t {
        let start = ti * hop;
        if start >= length {
            break;
        }
        let n = k.min(length - start);
        let mut dst = out.slice_mut(s![0, start..start + n]);
        dst += &frames.slice(s![ti, ..n]);
    }
    out
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_axis0(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of d(sum(w * f(params)))/d(params).
    fn check(build: impl Fn(&mut Graph, &[Var]) -> Var, shapes: &[(usize, usize)], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Mat> = shapes.iter().map(|&(r, c)| rand_mat(&mut rng, r, c)).collect();
        let eval = |vals: &[Mat]| -> (f64, Option<Vec<Mat>>) {
            let mut g = Graph::new();
            let vars: Vec<Var> = vals
                .iter()
                .enumerate()
                .map(|(i, v)| g.param(&format!("p{i}"), Arc::new(v.clone())))
                .collect();
            let out = build(&mut g, &vars);
            let w = Array2::from_shape_fn(g.value(out).dim(), |(i, j)| {
                ((i * 7 + j * 3) % 5) as f64 - 1.7
            });
            let wv = g.constant(w);
            let prod = g.mul(out, wv);
            let loss = g.sum(prod);
            let grads = g.backward(loss);
            let pg = g.param_grads(&grads);
            (
                g.value(loss)[[0, 0]],
                Some((0..vals.len()).map(|i| pg[&format!("p{i}")].clone()).collect()),
            )
        };
        let (_, analytic) = eval(&inputs);
        let analytic = analytic.unwrap();
        let h = 1e-6;
        for (pi, input) in inputs.iter().enumerate() {
            for idx in 0..input.len() {
                let (r, c) = (idx / input.ncols(), idx % input.ncols());
                let mut plus = inputs.clone();
                plus[pi][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[pi][[r, c]] -= h;
                let num = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let ana = analytic[pi][[r, c]];
                let err = (num - ana).abs() / (num.abs().max(ana.abs()).max(1e-6));
                assert!(err < 1e-6, "input {pi} [{r},{c}]: numeric {num} analytic {ana}");
            }
        }
    }

    #[test]
    fn grad_matmul_add_row() {
        check(
            |g, v| {
                let m = g.matmul(v[0], v[1]);
                g.add_row(m, v[2])
            },
            &[(3, 4), (4, 2), (1, 2)],
            1,
        );
    }

    #[test]
    fn grad_elementwise() {
        check(
            |g, v| {
                let a = g.tanh(v[0]);
                let b = g.sigmoid(v[1]);
                let c = g.mul(a, b);
                let d = g.sub(c, v[0]);
                let e = g.square(d);
                let f = g.mul_row(e, v[2]);
                g.scale(f, 0.3)
            },
            &[(3, 4), (3, 4), (1, 4)],
            2,
        );
    }

    #[test]
    fn grad_shape_ops() {
        check(
            |g, v| {
                let c = g.concat_cols(v[0], v[1]);
                let t = g.transpose(c);
                let r = g.reshape(t, 2, 15);
                let s = g.slice_cols(r, 3, 9);
                let sr = g.slice_rows(s, 1, 1);
                let m = g.mean_rows(s);
                g.add(sr, m)
            },
            &[(3, 4), (3, 6)],
            3,
        );
    }

    #[test]
    fn grad_softmax_and_ola() {
        check(
            |g, v| {
                let sm = g.softmax_over_rows(v[0]);
                let p = g.mul(sm, v[1]);
                g.overlap_add(p, 2, 9)
            },
            &[(4, 3), (4, 3)],
            4,
        );
        check(|g, v| g.overlap_add(v[0], 3, 6), &[(4, 4)], 5);
    }

    #[test]
    fn ola_matches_direct_sum() {
        let f = Array2::from_shape_fn((3, 4), |(t, k)| (t * 10 + k) as f64);
        let out = overlap_add(&f, 2, 8);
        // frame t covers [2t, 2t + 4)
        assert_eq!(out.row(0).to_vec(), vec![0.0, 1.0, 12.0, 14.0, 32.0, 34.0, 22.0, 23.0]);
    }

    #[test]
    fn softmax_columns_sum_to_one() {
        let m = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 3.0);
        let s = softmax_axis0(&m);
        for col in s.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }
}

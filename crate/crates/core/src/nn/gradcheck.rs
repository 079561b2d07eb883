//! Central finite-difference checks of named parameter gradients.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mat, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Entries whose gradient is this many times smaller than the largest
/// analytic gradient are judged on absolute error at that scale, since
/// central differences cannot resolve them relative to their own size.
const SCALE_FLOOR: f64 = 1e-4;

/// Perturbs up to `per_tensor` random entries of every tensor whose name
/// passes `filter` and compares the analytic gradient to
/// `(f(p + h) - f(p - h)) / 2h` using [`relative_error`] with a floor
/// relative to the largest analytic gradient.
pub fn check_gradients<F>(
    store: &ParamStore,
    filter: impl Fn(&str) -> bool,
    per_tensor: usize,
    h: f64,
    seed: u64,
    loss_and_grads: F,
) -> Result<GradCheck>
where
    F: Fn(&ParamStore) -> Result<(f64, BTreeMap<String, Mat>)>,
{
    let (_, analytic) = loss_and_grads(store)?;
    let scale = analytic.values().flat_map(|g| g.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (SCALE_FLOOR * scale).max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = store.clone();
    for name in store.names() {
        if !filter(&name) {
            continue;
        }
        let size = store.get(&name).map_or(0, |m| m.len());
        let picks: Vec<usize> = if size <= per_tensor {
            (0..size).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..size)).collect()
        };
        for idx in picks {
            let orig = flat(probe.get(&name).unwrap(), idx);
            set(probe.get_mut(&name), idx, orig + h);
            let (up, _) = loss_and_grads(&probe)?;
            set(probe.get_mut(&name), idx, orig - h);
            let (down, _) = loss_and_grads(&probe)?;
            set(probe.get_mut(&name), idx, orig);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(&name).map_or(0.0, |g| flat(g, idx));
            let err = relative_error(a, numeric, floor);
            out.checked += 1;
            if err >= out.max_rel_error {
                out.max_rel_error = err;
                out.worst = Some((name.clone(), idx, a, numeric));
            }
        }
    }
    Ok(out)
}

fn flat(m: &Mat, idx: usize) -> f64 {
    m[[idx / m.ncols(), idx % m.ncols()]]
}

fn set(m: &mut Mat, idx: usize, v: f64) {
    let c = m.ncols();
    m[[idx / c, idx % c]] = v;
}

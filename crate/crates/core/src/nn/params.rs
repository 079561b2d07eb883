use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::graph::{Graph, Mat, Var};

/// Named trainable tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Arc<Mat>>,
}

pub fn init_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// `acc += other`, key by key.
pub fn add_grads(acc: &mut BTreeMap<String, Mat>, other: &BTreeMap<String, Mat>) {
    for (k, v) in other {
        match acc.get_mut(k) {
            Some(a) => *a += v,
            None => {
                acc.insert(k.clone(), v.clone());
            }
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Mat) {
        self.tensors.insert(name.to_string(), Arc::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.tensors.get(name).map(|a| &**a)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        Arc::make_mut(self.tensors.get_mut(name).unwrap_or_else(|| panic!("no parameter {name}")))
    }

    /// Adds the named parameter to `g` as a trainable leaf.
    pub fn var(&self, g: &mut Graph, name: &str) -> Var {
        let t = self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        g.param(name, Arc::clone(t))
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.tensors.iter().map(|(k, v)| (k, &**v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn num_elements_with_prefix(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Rounds every value to the nearest `f32`, so the f32 checkpoint
    /// container round-trips parameters exactly.
    pub fn quantize_f32(&mut self) {
        for t in self.tensors.values_mut() {
            Arc::make_mut(t).mapv_inplace(|v| v as f32 as f64);
        }
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.tensors {
            h.update(k.as_bytes());
            for x in v.iter() {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;

pub type Mat = Array2<f64>;

/// Computes input gradients from the output gradient, the input values, and
/// which inputs actually need a gradient.
pub type BackwardFn = Box<dyn Fn(&Mat, &[Arc<Mat>], &[bool]) -> Vec<Option<Mat>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

struct Node {
    value: Arc<Mat>,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
}

pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.constant_arc(Arc::new(value))
    }

    pub fn constant_arc(&mut self, value: Arc<Mat>) -> Var {
        self.leaf(value, false)
    }

    /// Trainable leaf; its gradient is reported under `name`.
    pub fn param(&mut self, name: &str, value: Arc<Mat>) -> Var {
        let v = self.leaf(value, true);
        self.params.push((name.to_string(), v.0));
        v
    }

    fn leaf(&mut self, value: Arc<Mat>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shared(&self, v: Var) -> Arc<Mat> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an operation node. The backward closure is dropped when no
    /// input needs a gradient.
    pub fn custom(&mut self, value: Mat, inputs: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar (1 x 1) node.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be 1x1");
        self.backward_with(loss, Array2::ones((1, 1)))
    }

    pub fn backward_with(&self, out: Var, seed: Mat) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let inputs: Vec<Arc<Mat>> = node
                .inputs
                .iter()
                .map(|&i| Arc::clone(&self.nodes[i].value))
                .collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| self.nodes[i].requires_grad)
                .collect();
            let input_grads = backward(&g, &inputs, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for ((&i, gi), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                if !need {
                    continue;
                }
                if let Some(gi) = gi {
                    match grads[i].as_mut() {
                        Some(acc) => *acc += &gi,
                        None => grads[i] = Some(gi),
                    }
                }
            }
            // keep gradients of leaves only
            if !node.inputs.is_empty() {
                grads[idx] = None;
            } else {
                grads[idx] = Some(g);
            }
        }
        Grads { grads }
    }

    /// Parameter gradients by name; parameters the loss does not reach get zeros.
    pub fn param_grads(&self, grads: &Grads) -> BTreeMap<String, Mat> {
        let mut out: BTreeMap<String, Mat> = BTreeMap::new();
        for (name, idx) in &self.params {
            let g = grads.grads[*idx]
                .clone()
                .unwrap_or_else(|| Array2::zeros(self.nodes[*idx].value.dim()));
            match out.get_mut(name) {
                Some(acc) => *acc += &g,
                None => {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}

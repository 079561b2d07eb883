//! Minimal reverse-mode autodiff over row-major `f64` matrices.
//!
//! One [`Graph`] is built per training example; parameters enter as shared
//! leaves and their gradients are collected by name after [`Graph::backward`].

mod adam;
pub mod gradcheck;
mod graph;
mod lstm;
mod ops;
mod params;
pub mod tnsr;

pub use adam::{clip_grad_norm, Adam};
pub use graph::{Grads, Graph, Mat, Var};
pub use lstm::{Blstm, LstmDims};
pub use ops::overlap_add as ops_overlap_add;
pub use params::{add_grads, init_uniform, ParamStore};

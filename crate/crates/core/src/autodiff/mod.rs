//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Broadcasting is limited to rank-0 scalars against tensors, plus the two
//! explicit row-broadcast ops [`Graph::add_row`] and [`Graph::mul_row`] used by
//! dense layers. Kinks of `max`-type ops (ReLU, hinge, `maximum`, `abs`)
//! receive a zero subgradient.

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;

pub(crate) use graph::{hardsigmoid, sigmoid};
pub(crate) use tensor::dot;

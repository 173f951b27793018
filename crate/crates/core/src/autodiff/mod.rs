//! Reverse-mode automatic differentiation over dense tensors.

mod gradcheck;
mod graph;
mod ops;

pub use gradcheck::grad_check;
pub use graph::{backward, Gradients, Graph, NodeId};
pub use ops::{op_backward, op_forward, Conv2dAttrs, Op, PoolAttrs};

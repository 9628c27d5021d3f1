//! Minimal tensor engine with reverse-mode differentiation whose backward
//! pass is itself differentiable (the gradient-penalty term needs gradients
//! of a gradient).

pub mod gradcheck;
pub mod kernels;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{check_gradients, check_gradients_sampled, rel_err, GradCheckReport};
pub use scalar::{Precision, Scalar};
pub use tape::{eval_op, LeafKind, Node, NodeId, Op, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;

//! Dense `f64` tensors and a saved-value reverse-mode tape.
//!
//! The primitive set is exactly what the transformer needs: add, mul,
//! matmul, embedding gather, softmax, RMS normalization, SiLU, causal
//! scaled dot-product attention and cross-entropy.

mod gradcheck;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck, REL_FLOOR};
pub use tape::{Bindings, Evaluation, NodeId, Op, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;

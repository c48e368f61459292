//! Dense `f64` tensors and a tape-based reverse-mode differentiator.
//!
//! Values live on a [`Tape`] and are addressed through [`Var`] handles. Every
//! op checks shapes eagerly and records what the backward pass needs.
//! [`Tape::detach`] produces a value-identical copy that blocks gradient flow;
//! it is how hardness scores and margins stay out of the optimized graph.

mod tape;
mod tensor;

pub use tape::{sigmoid, Tape, Var};
pub use tensor::{softmax_slice, Tensor};

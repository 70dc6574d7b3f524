//! Dense tensors with reverse-mode differentiation.
//!
//! Forward ops are recorded on a [`Tape`]; [`Tape::backward`] either sums
//! parameter gradients over the batch or, in [`GradMode::PerExample`],
//! captures per-example factors for every trainable parameter so that
//! per-example gradient norms can be computed without materializing
//! per-example gradients.

pub mod capture;
mod tape;
mod tensor;

pub use capture::{CaptureRecord, Contribution, Factor, PerExampleCaptures};
pub use tape::{GradMode, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{gelu_scalar, softmax_in_place, LN_EPS};
pub(crate) use tensor::{axpy, dot};

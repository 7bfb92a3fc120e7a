//! Dense tensors, reverse-mode differentiation and Adam.
//!
//! Everything is `f64`. Broadcasting is limited to scalar-with-tensor and
//! equal shapes; row-wise patterns (bias, per-row scaling, gathers) have
//! dedicated operations on the [`Tape`].

mod checkpoint;
mod param;
mod sparse;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use param::{adam_step, AdamConfig, ParamId, Parameter};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::matmul_raw;

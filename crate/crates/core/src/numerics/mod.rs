//! Dense `f64` tensors and reverse-mode differentiation.

mod params;
mod tape;
mod tensor;

pub use params::{ParamId, ParamSlot, ParamStore};
pub use tape::{Binary, Tape, Unary, Var};
pub use tensor::{log_softmax_vec, matmul, sigmoid, softmax, softmax_vec, Tensor};

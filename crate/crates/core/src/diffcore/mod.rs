//! Minimal reverse-mode differentiation over dense tensors.

mod conv;
mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;

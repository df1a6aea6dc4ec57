//! Dense tensors with reverse-mode automatic differentiation, sized for small
//! convolutional encoder-decoder models on the CPU.

mod autograd;
mod error;
mod float;
pub mod gradcheck;
pub mod io;
mod ops;
mod tensor;

pub use autograd::{grad, TapeGraph};
pub use error::{Result, TensorError};
pub use float::Float;
pub use ops::{concat, NormMode, RunningStats};
pub use tensor::{numel, Tensor};

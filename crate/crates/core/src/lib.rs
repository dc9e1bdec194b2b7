//! Rank-polymorphic arrays, data-parallel comprehensions, and a
//! convolutional network for MNIST built from a handful of array kernels.
//!
//! - [`tensor`]: shapes, prefix selection, reshape, elementwise arithmetic
//!   and the comprehension constructor.
//! - [`runtime`]: statically scheduled, deterministic parallel evaluation of
//!   comprehensions.
//! - [`nn`]: convolution, pooling, sigmoid and their backward counterparts.
//! - [`network`]: the LeNet-style classifier, its gradients and SGD training.
//! - [`mnist`]: IDX file reader and batching.
//! - [`cli`]: the `tensorloom` command line.

pub mod cli;
pub mod mnist;
pub mod network;
pub mod nn;
pub mod runtime;
pub mod tensor;

pub use mnist::MnistSet;
pub use network::{Grads, Hyper, Params};
pub use runtime::ExecConfig;
pub use tensor::{BinOp, Shape, Tensor, TensorError};

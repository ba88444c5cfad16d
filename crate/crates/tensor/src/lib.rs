//! Minimal dense-tensor library with a reverse-mode gradient tape.
//!
//! Values are `f64` throughout. Broadcasting is limited to scalar-vs-tensor
//! and equal shapes; row-wise helpers ([`Var::add_bias`],
//! [`Var::scale_rows`]) cover what linear layers and per-row geometry need.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod optim;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use optim::{AdamWConfig, OptimizerState, ParamStore};
pub use tape::{Gradients, Reduction, Tape, Var, BCE_EPS};
pub use tensor::{
    add_bias, concat_cols, gather_rows, linear, matmul, max_pool_groups, relu, sigmoid,
    sigmoid_scalar, weighted_gather, Tensor,
};

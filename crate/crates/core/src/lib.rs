//! Amos optimizer with memory-reduced slot variables, reference baselines,
//! model-oriented scale rules and small differentiable models.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amos;
pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eta;
pub mod models;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{AxisMask, Tensor, TensorError};

//! Minimal dense tensors with define-by-run reverse-mode autodiff, the
//! convolution layers needed by small encoder-decoder networks, and Adam.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are what training code uses.

pub mod adam;
pub mod checkpoint;
pub mod conv;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod nn;
mod params;
mod scalar;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_transpose};
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use params::{Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type ParamStore64 = ParamStore<f64>;
pub type AdamState64 = AdamState<f64>;

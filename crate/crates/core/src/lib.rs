//! Sequential spatial network (SSN) for ego trajectory prediction from
//! bird's-eye-view rasters, built on a small reverse-mode autodiff kernel.
//!
//! The numeric core is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix the default 64-bit precision.

pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod net;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Graph = autograd::Graph<f64>;
pub type ParamStore = nn::ParamStore<f64>;

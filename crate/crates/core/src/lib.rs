//! Non-contrastive graph self-supervised learning with the VICReg
//! objective, including node-sampled, dimension-sampled and jointly
//! sampled variants of the loss.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod nystrom;
pub mod objective;
pub mod probe;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};

/// Dense matrix in verification precision.
pub type Matrix64 = linalg::Matrix<f64>;
/// Dense matrix in benchmark precision.
pub type Matrix32 = linalg::Matrix<f32>;
pub type Graph64 = graph::Graph<f64>;
pub type Graph32 = graph::Graph<f32>;
pub type Model64 = nn::Model<f64>;
pub type Model32 = nn::Model<f32>;
pub type LossBreakdown64 = objective::LossBreakdown<f64>;

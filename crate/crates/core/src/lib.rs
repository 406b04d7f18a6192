//! Multiscale spectral-spatial convolutional transformer for hyperspectral
//! pixel classification, with the tensor engine, data pipeline, trainer and
//! metrics it needs.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

//! Wavelet-domain regression of scalar outcomes on 2D/3D image predictors.

pub mod dwt;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod modelsel;
pub mod rng;
pub mod simulate;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type Dataset = estimators::Dataset<f64>;
pub type Fit = estimators::ScalarOnImageFit<f64>;
pub type ImageStack = dwt::ImageStack<f64>;
pub type GlmFit = glm::GlmFit<f64>;
pub type CoefFit = estimators::CoefFit<f64>;

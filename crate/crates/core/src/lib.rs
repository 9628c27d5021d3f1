//! Adversarial-perceptual denoising for low-dose CT, built from first
//! principles: a differentiable tensor engine, the generator/critic pair,
//! six loss configurations, a synthetic CT data pipeline, and a metrics
//! harness for comparative studies.

pub mod autodiff;
pub mod bench;
pub mod ctsim;
pub mod data;
pub mod denoise;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod train;
pub mod viz;
pub mod wvgf;

pub use autodiff::{Precision, Scalar, Tensor};

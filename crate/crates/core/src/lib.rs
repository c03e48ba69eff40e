//! Domain-adversarial sequence regression with a temporal-convolution
//! feature extractor, built on a small reverse-mode autodiff engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tensors, the computation graph, gradient checking.
//! - [`nn`]: dense, weight-normalised causal convolution, batch norm, TCN
//!   residual blocks, LSTM and MLP layers.
//! - [`model`]: feature extractors, the Gaussian regression head, the domain
//!   discriminator and their composition.
//! - [`training`]: losses, SGD, adversarial / fine-tuning / direct training
//!   loops and convergence detection.
//! - [`data`]: synthetic crop-season generation, CSV ingestion, windowing
//!   and normalisation.
//! - [`harness`]: metrics, checkpoints, gradient-check reports and the
//!   experiment grid used by the `tcn-dann` binary.

// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};

//! Lightweight edge-aware super-resolution for text images.
//!
//! The network works at low resolution on the luma channel: four stacked 3x3
//! convolutions (32, 24, 16, 8 filters) whose first, second and fourth outputs
//! are concatenated with a 16-filter branch over the Sobel edge map, two more
//! convolutions produce `s*s` channels, and a pixel shuffle lifts them to the
//! output grid. The result is a residual added to bicubic upsampling.
//!
//! Modules, bottom-up:
//! - [`tensor`]: rank-4 tensors, convolution, pixel shuffle, losses, Adam.
//! - [`imageops`]: colour conversion, bicubic resampling, Sobel/Canny, patches.
//! - [`model`]: network definition, forward/backward, model files.
//! - [`training`]: dataset pipeline, learning-rate schedule, checkpoints.
//! - [`metrics`]: PSNR, SSIM, dataset evaluation reports.
//! - [`bench`]: latency measurement.

pub mod bench;
pub mod error;
pub mod imageops;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

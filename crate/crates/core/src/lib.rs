//! Isolated sign recognition from pose landmarks.
//!
//! Landmark sequences extracted by a pose estimator are packed into a
//! three-channel image (three consecutive frames per pixel, x-coordinates in
//! the left half and y-coordinates in the right half), resized to a fixed
//! network input and classified by a convolutional network. Evaluation follows
//! a nested leave-one-person-out protocol.
//!
//! Module map:
//!
//! - [`landmarks`]: OpenPose JSON parsing, landmark selection, take
//!   segmentation, `slm-v1` landmark files and dataset manifests.
//! - [`encoder`]: sequence to image encoding, quantization, resize and the
//!   inverse decoder.
//! - [`transforms`]: per-sample geometric augmentation and frame-count
//!   uniformization.
//! - [`splits`]: nested leave-one-person-out plans.
//! - [`classifier`]: networks, training loop, prediction and model files.
//! - [`metrics`]: confusion matrices, macro metrics and aggregate reports.

pub mod classifier;
pub mod encoder;
mod error;
pub mod landmarks;
pub mod metrics;
pub mod seed;
pub mod splits;
pub mod transforms;

pub use error::{Error, Result};

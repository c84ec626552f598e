//! Trajectory-conditioned driving captions at toy scale.
//!
//! The pipeline projects a planned trajectory into the camera image,
//! rasterizes it, encodes camera and trajectory images with small vision
//! transformers, fuses them, and decodes an `action ; justification`
//! caption. Everything runs on a tiny reverse-mode autodiff engine in
//! [`tensor`].

pub mod captioner;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod tensor;
pub mod text;
pub mod verify;

pub use error::{Error, Result};

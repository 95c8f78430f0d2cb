//! Burst super-resolution for Bayer raw frames.
//!
//! A burst of RGGB frames is registered to a base frame, each frame's
//! samples are splatted onto the output grid with anisotropic Gaussian
//! kernels shaped by local gradient structure, and a per-pixel robustness
//! mask suppresses contributions that disagree with the base. The result is
//! a full RGB image at 1x to 3x the sensor resolution with no separate
//! demosaicing step.

pub mod align;
pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod io;
pub mod kernel;
pub mod merge;
pub mod metrics;
pub mod noise;
pub mod raw;
pub mod robust;
pub mod synth;

pub use error::{Error, Result};

//! Room impulse response interpolation toolkit.
//!
//! Simulates shoebox-room RIR matrices over arc-shaped microphone arrays
//! (image-source method), converts them to normalized grayscale patches,
//! reconstructs missing microphone columns either with a mask-conditioned
//! diffusion model or a cubic-spline baseline, and scores reconstructions
//! with NMSE, cosine distance, and energy-decay statistics.

pub mod baseline;
pub mod diffusion;
mod error;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod room_sim;

pub use error::{Error, Result};

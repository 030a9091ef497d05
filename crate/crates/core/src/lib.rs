//! Shape recognition and classification for active electro-sensing.
//!
//! The pipeline simulates the transdermal potential of a fish-shaped sensor
//! near a small target, reduces the data to contracted generalized
//! polarization tensors by least squares, and classifies the target against a
//! dictionary using rigid-motion and scale invariants or the multi-frequency
//! spectrum of its first-order polarization tensor.

pub mod classifier;
pub mod error;
pub mod features;
pub mod forward;
pub mod geometry;
pub mod gpt;
pub mod inversion;
pub mod potentials;

pub use error::{Error, Result};
pub use num_complex::Complex64;

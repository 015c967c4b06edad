//! Hybrid quantum-classical EEG classification.
//!
//! The crate pairs an EEGNet-style convolutional feature extractor with a
//! variational quantum circuit simulated on an exact statevector backend,
//! plus the data pipeline (synthetic EEG generation, band-pass filtering,
//! resampling, subject-aware splits), a from-scratch training stack
//! (explicit layer backward passes, parameter-shift gradients, AdamW), and
//! binary formats for epochs and checkpoints.

pub mod error;
pub mod model;
pub mod nn;
pub mod statevec;
pub mod vqc;

pub use error::{Error, Result};

//! Reference-free EPI Nyquist ghost correction at phantom scale.
//!
//! The pipeline splits an interleaved EPI acquisition into virtual even/odd
//! k-space channels, interpolates the missing lines either by low-rank
//! Hankel completion or by a k-space encoder-decoder network, and combines
//! the corrected channels into a sum-of-squares image. Classic corrections
//! (navigator phase fit, entropy minimization, GRAPPA) and the ghost-to-
//! signal ratio metric are included for comparison studies.

pub mod aloha;
pub mod entropy;
pub mod error;
pub mod fft;
pub mod grappa;
pub mod hankel;
pub mod linalg;
pub mod metrics;
pub mod phantom;
pub mod reference;
pub mod sim;
pub mod volume;

pub use error::{GhostError, Result};

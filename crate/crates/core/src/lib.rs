//! Reconstruction of strings from deletion-channel traces when deletion
//! probabilities vary by position or by letter.
//!
//! The crate provides the channel simulators (`channel`), exact expected
//! padded-trace statistics and their generating polynomials (`genfunc`),
//! separating-coordinate and arc-infimum analysis (`separation`),
//! mean-based tournament reconstruction (`reconstruct`), and
//! method-of-moments retention estimation with trace equalization for the
//! unknown-probability setting (`estimate`).

pub mod channel;
pub mod error;
pub mod estimate;
pub mod genfunc;
pub mod reconstruct;
pub mod rng;
pub mod separation;
mod util;

pub use error::{Error, Result};
pub use util::sha256_hex;

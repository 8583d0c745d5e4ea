//! Unpaired translation between 3D grayscale (OCT-like) and 3D RGB
//! (confocal-like) volumes.
//!
//! The crate implements the full desk-scale stack: the volume data model and
//! depth projection ([`volume`]), the unpaired dataset / augmentation /
//! synthetic-phantom pipeline ([`datapipe`]), 3D generators and PatchGAN
//! discriminators with hand-rolled backprop ([`nets`], [`nn`]), the four-term
//! training objective ([`losses`]), the cycle-consistent training loop with
//! image pools and byte-exact checkpointing ([`trainer`]), and evaluation
//! metrics: depth-projection FID at 768/2048 feature dims, unbiased KID, and
//! mean-opinion-score aggregation from expert rankings ([`metrics`]).
//!
//! Everything is deterministic given a seed: all randomness flows through
//! counter-derived ChaCha12 streams ([`rng`]), so training trajectories are
//! reproducible bit-for-bit and checkpoint-resume is exact.

#[cfg(feature = "blas")]
extern crate blas_src;

pub mod datapipe;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod rng;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Domain, ProjectionImage, Volume};

//! Numerical core for generative aircraft-trajectory experiments.
//!
//! Everything here is `no_std` + `alloc`: data transforms, dead-reckoning
//! kinematics, a small reverse-mode network substrate, diffusion and
//! flow-matching generators, the latent (VAE) variants and the evaluation
//! metrics. File formats and orchestration live in the `trajlab` crate.

#![no_std]

extern crate alloc;

pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod flowmatch;
pub mod kinematics;
pub mod latent;
pub mod metrics;
pub mod model;
pub mod net;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

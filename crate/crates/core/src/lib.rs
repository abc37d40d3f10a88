//! Sequential Monte Carlo inference for a shot-noise Cox process observed
//! through tick times and Cauchy log-returns.

pub mod cli;
pub mod cmfilter;
pub mod datagen;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod particle;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};

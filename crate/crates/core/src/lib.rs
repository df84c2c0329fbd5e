//! Complementary ensembles: a primary convolutional classifier followed by a
//! cascade of models fine-tuned on the samples their parent was least sure of.
//!
//! All numerics are `f64`, row-major, on the CPU. Randomness flows through
//! [`rng::Rng`] so that a seed fully determines a run.

pub mod cascade;
pub mod confidence;
pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

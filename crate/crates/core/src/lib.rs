//! Document-level pre-training of a two-level transformer encoder.

pub mod datapipe;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod losses;
pub mod numcore;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};

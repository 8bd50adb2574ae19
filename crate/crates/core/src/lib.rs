//! Style transfer over the codes of a frozen motion autoencoder.

pub mod error;
pub mod evaluation;
pub mod global_motion;
pub mod inference;
pub mod codec;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod stylizer;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};

//! Reverse-mode automatic differentiation for small 1-D convolutional
//! networks: a recording tape, named parameter stores, an adaptive-moment
//! optimiser and a flat tensor checkpoint format.

pub mod blob;
pub mod optim;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;

pub use blob::{read_blob, write_blob};
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TapeError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

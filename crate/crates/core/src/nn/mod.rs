//! Minimal differentiable building blocks: an autograd tape, parameter
//! storage, and the recurrent and attention layers built on them.

mod layers;
mod params;
mod tape;

use thiserror::Error;

pub use layers::{Attention, Gru, Linear};
pub use params::{load_checkpoint, save_checkpoint, Gradients, ParamId, ParameterSet, Tensor};
pub use tape::{sigmoid, softmax, Tape, Var};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint lacks parameter {0}")]
    MissingParam(String),
    #[error("checkpoint has unexpected parameter {0}")]
    UnexpectedParam(String),
}

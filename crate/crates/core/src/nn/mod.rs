//! Minimal neural-network machinery for amortized proposals: a reverse-mode
//! tape, multilayer perceptron conditioners and the Adam optimizer.

mod adam;
mod mlp;
mod tape;

pub use adam::{clip_global_norm, AdamState};
pub use mlp::{Activation, Mlp};
pub use tape::{Gradients, Head, Tape, UnaryOp, Var};

pub(crate) use tape::softplus;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape { op: &'static str, left: usize, right: usize },
    #[error("loss must be a scalar, got length {0}")]
    NotScalar(usize),
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
    #[error("training diverged: non-finite gradient at step {step}")]
    Divergence { step: u64 },
}

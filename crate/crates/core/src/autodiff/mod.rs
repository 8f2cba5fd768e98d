//! Dense tensors and a tape for reverse-mode differentiation.
//!
//! Values are `f64`. Shapes are explicit and nothing broadcasts implicitly;
//! row and column vector additions are separate ops. Reductions run
//! left-to-right over the row-major index, so results are bitwise reproducible.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport, Stencil};
pub use tape::{sigmoid, softplus, Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_raw;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    Length { shape: Vec<usize>, len: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

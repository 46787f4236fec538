//! Dense arrays with a define-by-run reverse-mode gradient tape.
//!
//! Every real-valued quantity of the forecasting model lives in an [`Array`].
//! During a forward pass arrays are lifted onto a [`Tape`] as [`Var`] handles;
//! each primitive records itself and its vector-Jacobian product, and
//! [`Tape::backward`] replays the record in reverse creation order.
//!
//! Tapes are single threaded. Independent tapes may be driven from separate
//! threads, which is how the trainer parallelises a batch.

mod array;
mod gradcheck;
mod tape;

pub use array::Array;
pub use gradcheck::{grad_check, grad_check_on, GradCheckReport, ParamCheck};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("array of shape {shape:?} cannot hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("softmax over an axis of size 0 (input shape {0:?})")]
    EmptySoftmaxAxis(Vec<usize>),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
}

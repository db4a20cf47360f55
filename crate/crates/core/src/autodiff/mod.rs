//! Reverse-mode differentiable 1D kernels.
//!
//! Values live in [`Tensor`]s recorded on a [`Tape`]; gradients are
//! produced by consuming the tape with [`Tape::backward`]. Kernels are
//! generic over [`Scalar`] so the same code runs in `f32` for training and
//! `f64` for finite-difference checks.

mod adam;
mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport, LayerCheck, Objective};
pub use kernels::ConvSpec;
pub use tape::{stable_sigmoid, BnConfig, BnMode, Gradients, RunningStats, Tape, Var};
pub(crate) use tape::BCE_EPS;
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("convolution output length would be zero")]
    EmptyOutput,
    #[error("batch norm in training mode needs more than one value per channel")]
    DegenerateBatch,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value reached the loss")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

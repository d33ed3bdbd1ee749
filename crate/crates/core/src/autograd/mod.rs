//! Minimal reverse-mode differentiation engine.
//!
//! Provides exactly the operator set the segmentation network needs
//! (3D convolution, stride-2 transpose convolution, SELU, sigmoid,
//! elementwise add, channel concatenation, soft Dice loss) plus the Adam
//! optimizer. The engine is generic over f32 (training storage) and f64
//! (finite-difference verification); loss reductions and optimizer moments
//! always accumulate in double precision.

mod adam;
mod conv;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use conv::{conv3d_forward, conv3d_transpose_forward};
pub use tape::{Tape, Var, DICE_EPSILON, SELU_ALPHA, SELU_LAMBDA};
pub use tensor::{elem, Element, Shape, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutogradError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

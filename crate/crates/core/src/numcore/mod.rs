//! Minimal dense numerics for the title generator: tensors, a GRU cell,
//! additive attention, softmax cross-entropy, dropout, Adam and a
//! finite-difference gradient checker.
//!
//! Everything is generic over [`Real`] so training can run in `f32` while
//! gradient checks run in `f64`. Backpropagation is written by hand per layer.

mod adam;
mod attention;
mod dropout;
mod gradcheck;
mod gru;
mod loss;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{attention_backward, attention_forward, attention_scores, context, AttentionParams, AttentionStep};
pub use dropout::{dropout, DropoutMode};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use gru::{gru_backward, gru_cell, gru_forward, GruCache, GruParams};
pub use loss::{log_softmax, softmax, softmax_in_place, softmax_xent};
pub use tensor::{axpy, dot, matvec, matvec_acc, matvec_t_acc, outer_acc, ParamSet, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
}

pub(crate) fn expect_len(what: &str, got: usize, want: usize) -> Result<(), NumError> {
    if got == want {
        Ok(())
    } else {
        Err(NumError::ShapeMismatch(format!("{what}: expected length {want}, got {got}")))
    }
}

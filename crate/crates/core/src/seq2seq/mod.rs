//! Attention encoder-decoder over pseudo-language sources.
//!
//! The encoder is a bidirectional GRU whose per-position states are summed.
//! The decoder is a GRU fed with the previous target embedding and an
//! additive-attention context; a linear readout over `[state; context]`
//! gives the next-token distribution. Placeholders in the output are mapped
//! back to source entities through the attention weights.

mod checkpoint;
mod config;
mod decode;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use config::ModelConfig;
pub use decode::{resolve_placeholders, DecodeTrace, Resolution};
pub use model::{DecodeStep, EncoderOutput, Seq2Seq, Seq2SeqParams, SourcePlaceholder};
pub use train::{decode_titles, dev_bleu, train, DevExample, EpochRecord, StopReason, TrainConfig, TrainOutcome, PATIENCE};

use thiserror::Error;

use crate::metrics::MetricError;
use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("source sequence is empty")]
    EmptySource,
    #[error("training and dev corpora must be non-empty")]
    EmptyCorpus,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("placeholder `${slot_type}` at output position {index} has no unused source placeholder (partial title: {partial})")]
    UnresolvedPlaceholder {
        index: usize,
        slot_type: String,
        partial: String,
        /// `(output index, source position)` for the placeholders that did resolve.
        mapping: Vec<(usize, usize)>,
    },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;

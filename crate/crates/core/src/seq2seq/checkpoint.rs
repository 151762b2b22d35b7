use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpusprep::Vocabulary;
use crate::numcore::{ParamSet, Real, Tensor};

use super::model::{Seq2Seq, Seq2SeqParams};
use super::{ModelConfig, Seq2SeqError};

pub const CHECKPOINT_MAGIC: &[u8] = b"SLOTGEN-CKPT v1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    precision: String,
    vocab: Vec<String>,
    epoch: usize,
    dev_bleu_history: Vec<f64>,
    preprocess: Option<serde_json::Value>,
    tensors: Vec<TensorEntry>,
}

/// A trained model with its training history and whatever preprocessing
/// state is needed to apply it to raw pages.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Seq2Seq<T>,
    pub epoch: usize,
    pub dev_bleu_history: Vec<f64>,
    /// Opaque to this module; the pipeline stores tag map, policy and BPE codes here.
    pub preprocess: Option<serde_json::Value>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: Seq2Seq<T>) -> Self {
        Checkpoint {
            model,
            epoch: 0,
            dev_bleu_history: Vec::new(),
            preprocess: None,
        }
    }

    /// Magic line, little-endian `u64` header length, JSON header, then every
    /// tensor's values little-endian in header order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = &self.model.params;
        let header = Header {
            config: self.model.config.clone(),
            precision: T::NAME.to_string(),
            vocab: self.model.vocab.tokens().to_vec(),
            epoch: self.epoch,
            dev_bleu_history: self.dev_bleu_history.clone(),
            preprocess: self.preprocess.clone(),
            tensors: params
                .names()
                .into_iter()
                .zip(params.tensors())
                .map(|(name, t)| TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + json.len() + params.num_values() * T::BYTES);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in params.tensors() {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint, converting stored values to `T` if needed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Seq2SeqError> {
        let bad = |m: &str| Seq2SeqError::Checkpoint(m.to_string());
        let rest = bytes.strip_prefix(CHECKPOINT_MAGIC).ok_or_else(|| bad("missing SLOTGEN-CKPT v1 header"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header length"));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..len]).map_err(|e| bad(&format!("header: {e}")))?;
        let mut blob = &rest[len..];
        header.config.validate()?;
        let vocab = Vocabulary::from_tokens(header.vocab);
        let mut params =
            Seq2SeqParams::<T>::zeros(vocab.len(), header.config.embed_dim, header.config.hidden_dim);
        if params.names().len() != header.tensors.len() {
            return Err(bad("tensor count does not match the architecture"));
        }
        for ((dst, name), entry) in params.tensors_mut().into_iter().zip(Seq2SeqParams::<T>::zeros(1, 1, 1).names()).zip(&header.tensors) {
            if entry.name != name || entry.shape != dst.shape() {
                return Err(bad(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
            }
            let values = match header.precision.as_str() {
                "f32" => read_values::<f32, T>(&mut blob, dst.len()),
                "f64" => read_values::<f64, T>(&mut blob, dst.len()),
                other => return Err(bad(&format!("unknown precision {other}"))),
            }
            .ok_or_else(|| bad("truncated parameter data"))?;
            *dst = Tensor::from_vec(&entry.shape, values)?;
        }
        if !blob.is_empty() {
            return Err(bad("trailing bytes after parameters"));
        }
        Ok(Checkpoint {
            model: Seq2Seq {
                config: header.config,
                vocab,
                params,
            },
            epoch: header.epoch,
            dev_bleu_history: header.dev_bleu_history,
            preprocess: header.preprocess,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Seq2SeqError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Seq2SeqError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_values<S: Real, T: Real>(blob: &mut &[u8], n: usize) -> Option<Vec<T>> {
    let bytes = n * S::BYTES;
    if blob.len() < bytes {
        return None;
    }
    let (head, tail) = blob.split_at(bytes);
    *blob = tail;
    Some(head.chunks_exact(S::BYTES).map(|c| T::of(S::read_le(c).f64())).collect())
}

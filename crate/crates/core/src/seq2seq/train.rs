use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpusprep::ParallelExample;
use crate::lexicon::strip_entity;
use crate::metrics::bleu;
use crate::numcore::{adam_step, AdamConfig, AdamState, NumError, ParamSet, Real};

use super::decode::resolve_placeholders;
use super::model::{Seq2Seq, Seq2SeqParams};
use super::Seq2SeqError;

/// Number of epochs without dev-BLEU improvement before training stops.
pub const PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Neither early stopping nor learning-rate decay happens before this epoch.
    pub min_epochs: usize,
    /// Stop as soon as dev BLEU reaches this value.
    pub stop_at_bleu: Option<f64>,
    /// Rescale the batch gradient when its global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
    /// Multiply the learning rate by `adam.lr_decay` after every epoch
    /// whose dev BLEU does not improve.
    pub decay_on_plateau: bool,
    /// Batches are formed from windows of this many batches sorted by source length.
    pub bucket_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: PATIENCE,
            min_epochs: 0,
            stop_at_bleu: None,
            clip_norm: Some(5.0),
            adam: AdamConfig::default(),
            decay_on_plateau: true,
            bucket_window: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Seq2SeqError::InvalidConfig(
                "batch_size, max_epochs and patience must be at least 1".into(),
            ));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Seq2SeqError::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A dev item: source tokens keep their entities, the reference is the
/// plain title text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevExample {
    pub source: Vec<String>,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean summed cross-entropy per training example.
    pub loss: f64,
    pub dev_bleu: f64,
    pub lr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    TargetBleu,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best dev BLEU.
    pub model: Seq2Seq<T>,
    pub best_epoch: usize,
    pub best_bleu: f64,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl<T> TrainOutcome<T> {
    pub fn dev_bleu_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.dev_bleu).collect()
    }
}

struct Encoded {
    src: Vec<usize>,
    trg: Vec<usize>,
}

/// Greedy (or configured-beam) decoding of every dev source, with
/// placeholders resolved. Unresolvable titles keep the literal placeholder.
pub fn decode_titles<T: Real, S: AsRef<str>>(model: &Seq2Seq<T>, sources: &[Vec<S>]) -> Result<Vec<String>, Seq2SeqError> {
    let mut out = Vec::with_capacity(sources.len());
    for src in sources {
        let (enc, trace) = model.translate(src)?;
        let text = match resolve_placeholders(&trace, &enc) {
            Ok(r) => r.text,
            Err(Seq2SeqError::UnresolvedPlaceholder { partial, .. }) => partial,
            Err(e) => return Err(e),
        };
        out.push(text);
    }
    Ok(out)
}

pub fn dev_bleu<T: Real>(model: &Seq2Seq<T>, dev: &[DevExample]) -> Result<f64, Seq2SeqError> {
    let sources: Vec<&[String]> = dev.iter().map(|d| d.source.as_slice()).collect();
    let hyps = decode_titles(model, &sources.iter().map(|s| s.to_vec()).collect::<Vec<_>>())?;
    let refs: Vec<&str> = dev.iter().map(|d| d.reference.as_str()).collect();
    Ok(bleu(&hyps, &refs)?)
}

fn batches<R: Rng>(examples: &[Encoded], cfg: &TrainConfig, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let window = cfg.batch_size * cfg.bucket_window.max(1);
    let mut out = Vec::new();
    for chunk in order.chunks_mut(window) {
        chunk.sort_by_key(|&i| examples[i].src.len());
        out.extend(chunk.chunks(cfg.batch_size).map(<[usize]>::to_vec));
    }
    out.shuffle(rng);
    out
}

fn clip<T: Real>(grads: &mut Seq2SeqParams<T>, max_norm: f64) {
    let norm = grads.tensors().iter().map(|t| t.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = T::of(max_norm / norm);
        for t in grads.tensors_mut() {
            t.scale(k);
        }
    }
}

/// Trains with Adam and early stopping on dev BLEU. Training sources may
/// carry entities; they are stripped before id lookup. Shuffling and dropout
/// masks draw from `rng`.
pub fn train<T: Real, R: Rng>(
    mut model: Seq2Seq<T>,
    train: &[ParallelExample],
    dev: &[DevExample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome<T>, Seq2SeqError> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Seq2SeqError::EmptyCorpus);
    }
    let data: Vec<Encoded> = train
        .iter()
        .map(|ex| Encoded {
            src: ex.source.iter().map(|t| model.vocab.id(&strip_entity(t))).collect(),
            trg: model.vocab.encode(&ex.target),
        })
        .collect();
    let dropout_rate = model.config.dropout;
    let mut grads = Seq2SeqParams::<T>::zeros(model.vocab.len(), model.embed_dim(), model.hidden_dim());
    let mut adam = AdamState::new(&model.params, cfg.adam);

    let mut best: Option<(Seq2Seq<T>, usize, f64)> = None;
    let mut history = Vec::new();
    let mut bad_epochs = 0;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for (bi, batch) in batches(&data, cfg, rng).into_iter().enumerate() {
            grads.zero_all();
            let mut batch_loss = 0.0;
            for &i in &batch {
                let drop = (dropout_rate > 0.0).then_some((&mut *rng, dropout_rate));
                let l = model.loss_and_grad(&data[i].src, &data[i].trg, drop, &mut grads)?.f64();
                batch_loss += l;
            }
            if !batch_loss.is_finite() {
                return Err(Seq2SeqError::DivergedLoss {
                    epoch,
                    batch: bi,
                    loss: batch_loss,
                });
            }
            total += batch_loss;
            let inv = T::of(1.0 / batch.len() as f64);
            for t in grads.tensors_mut() {
                t.scale(inv);
            }
            if let Some(max_norm) = cfg.clip_norm {
                clip(&mut grads, max_norm);
            }
            match adam_step(&mut model.params, &grads, &mut adam) {
                Ok(()) => {}
                Err(NumError::NonFiniteGradient(_)) => {
                    return Err(Seq2SeqError::DivergedLoss {
                        epoch,
                        batch: bi,
                        loss: batch_loss,
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        let bleu = dev_bleu(&model, dev)?;
        let improved = best.as_ref().is_none_or(|b| bleu > b.2);
        let record = EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            dev_bleu: bleu,
            lr: adam.lr,
            improved,
        };
        info!(
            "epoch {epoch}: loss {:.4} dev BLEU {:.2} lr {:.2e}{}",
            record.loss,
            bleu,
            adam.lr,
            if improved { " *" } else { "" }
        );
        history.push(record);
        // ties keep the later parameters but do not reset patience
        if best.as_ref().is_none_or(|b| bleu >= b.2) {
            best = Some((model.clone(), epoch, bleu));
        }
        if improved {
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.decay_on_plateau && epoch > cfg.min_epochs {
                adam.decay();
            }
        }
        if cfg.stop_at_bleu.is_some_and(|t| bleu >= t) {
            stop = StopReason::TargetBleu;
            break;
        }
        if bad_epochs >= cfg.patience && epoch >= cfg.min_epochs {
            stop = StopReason::Patience;
            break;
        }
    }
    let (model, best_epoch, best_bleu) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_bleu,
        history,
        stop,
    })
}

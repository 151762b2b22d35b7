use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpusprep::{BOS_ID, EOS, EOS_ID};
use crate::lexicon::Placeholder;
use crate::numcore::Real;
use crate::subword::CONTINUATION;

use super::model::{EncoderOutput, Seq2Seq};
use super::Seq2SeqError;

/// Emitted tokens with the attention row and decoder state of every step.
/// A final `</s>` is included when it was emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub attention: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    /// Sum of token log probabilities divided by the number of tokens.
    pub score: f64,
}

impl DecodeTrace {
    /// Tokens before `</s>`.
    pub fn content_tokens(&self) -> &[String] {
        match self.tokens.last() {
            Some(t) if t == EOS => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

#[derive(Clone)]
struct Hyp<T> {
    ids: Vec<usize>,
    attention: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    state: Vec<T>,
    logp: f64,
}

impl<T> Hyp<T> {
    fn norm_score(&self) -> f64 {
        self.logp / self.ids.len().max(1) as f64
    }
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

/// Indices of the `k` largest entries, ties broken toward the lower index.
fn top_k<T: Real>(probs: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

impl<T: Real> Seq2Seq<T> {
    /// Greedy decoding (`beam_size == 1`) or length-normalized beam search.
    pub fn generate(&self, enc: &EncoderOutput<T>, max_len: usize, beam_size: usize) -> Result<DecodeTrace, Seq2SeqError> {
        if max_len == 0 || beam_size == 0 {
            return Err(Seq2SeqError::InvalidConfig("max_len and beam_size must be at least 1".into()));
        }
        let start = Hyp {
            ids: Vec::new(),
            attention: Vec::new(),
            states: Vec::new(),
            state: enc.s0.clone(),
            logp: 0.0,
        };
        let mut alive = vec![start];
        let mut finished: Vec<Hyp<T>> = Vec::new();
        for _ in 0..max_len {
            let mut candidates: Vec<(f64, usize, usize, Vec<T>, Vec<f64>)> = Vec::new();
            for (hi, h) in alive.iter().enumerate() {
                let y_prev = h.ids.last().copied().unwrap_or(BOS_ID);
                let step = self.decode_step(enc, &h.state, y_prev)?;
                let att = to_f64(&step.attention);
                for tok in top_k(&step.probs, beam_size) {
                    let lp = step.probs[tok].f64().max(f64::MIN_POSITIVE).ln();
                    candidates.push((h.logp + lp, hi, tok, step.state.clone(), att.clone()));
                }
            }
            // Stable: equal scores keep hypothesis order, then token order.
            candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
            let mut next = Vec::new();
            for (logp, hi, tok, state, att) in candidates.into_iter().take(beam_size) {
                let parent = &alive[hi];
                let mut h = Hyp {
                    ids: parent.ids.clone(),
                    attention: parent.attention.clone(),
                    states: parent.states.clone(),
                    state,
                    logp,
                };
                h.ids.push(tok);
                h.attention.push(att);
                h.states.push(to_f64(&h.state));
                if tok == EOS_ID {
                    finished.push(h);
                } else {
                    next.push(h);
                }
            }
            alive = next;
            if alive.is_empty() || finished.len() >= beam_size {
                break;
            }
        }
        let pool = if finished.is_empty() { &alive } else { &finished };
        let best = pool
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.norm_score()
                    .partial_cmp(&b.norm_score())
                    .unwrap_or(Ordering::Equal)
                    .then(ib.cmp(ia))
            })
            .map(|(_, h)| h.clone())
            .expect("beam keeps at least one hypothesis");
        Ok(DecodeTrace {
            tokens: best.ids.iter().map(|&i| self.vocab.token(i).to_string()).collect(),
            score: best.norm_score(),
            ids: best.ids,
            attention: best.attention,
            states: best.states,
        })
    }

    /// Encodes `source` and decodes with the configured length and beam.
    pub fn translate<S: AsRef<str>>(&self, source: &[S]) -> Result<(EncoderOutput<T>, DecodeTrace), Seq2SeqError> {
        let enc = self.encode(source)?;
        let trace = self.generate(&enc, self.config.max_target_len, self.config.beam_size)?;
        Ok((enc, trace))
    }
}

/// A decoded title with placeholders replaced by source entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub text: String,
    /// `(target token index, source position)` per resolved placeholder.
    pub mapping: Vec<(usize, usize)>,
    /// Set when some placeholder had to take a source entity of another slot type.
    pub type_fallback: bool,
}

/// Replaces each emitted placeholder, left to right, with the entity of the
/// unused source placeholder it attends to most. Same-type sources are
/// preferred; exact ties go to the lower source position. Subword pieces are
/// joined and `</s>` is dropped.
pub fn resolve_placeholders<T>(trace: &DecodeTrace, enc: &EncoderOutput<T>) -> Result<Resolution, Seq2SeqError> {
    let mut used = vec![false; enc.placeholders.len()];
    let mut words: Vec<String> = Vec::new();
    let mut partial = String::new();
    let mut mapping = Vec::new();
    let mut type_fallback = false;
    let mut unresolved: Option<(usize, String)> = None;
    let flush = |partial: &mut String, words: &mut Vec<String>| {
        if !partial.is_empty() {
            words.push(std::mem::take(partial));
        }
    };
    for (j, tok) in trace.content_tokens().iter().enumerate() {
        let Some(ph) = Placeholder::parse(tok) else {
            match tok.strip_suffix(CONTINUATION) {
                Some(piece) => partial.push_str(piece),
                None => {
                    partial.push_str(tok);
                    flush(&mut partial, &mut words);
                }
            }
            continue;
        };
        flush(&mut partial, &mut words);
        let row = trace.attention.get(j).map(Vec::as_slice).unwrap_or(&[]);
        let weight = |k: usize| row.get(enc.placeholders[k].position).copied().unwrap_or(0.0);
        let pick = |same_type: bool| {
            let mut best: Option<usize> = None;
            for (k, sp) in enc.placeholders.iter().enumerate() {
                if used[k] || (same_type && sp.slot_type != ph.slot_type) {
                    continue;
                }
                // placeholders are stored in position order, so `>` keeps the lowest on ties
                if best.is_none_or(|b| weight(k) > weight(b)) {
                    best = Some(k);
                }
            }
            best
        };
        let choice = match pick(true) {
            Some(k) => Some(k),
            None => {
                let k = pick(false);
                type_fallback |= k.is_some();
                k
            }
        };
        match choice {
            Some(k) => {
                used[k] = true;
                mapping.push((j, enc.placeholders[k].position));
                words.push(enc.placeholders[k].entity.clone());
            }
            None => {
                unresolved.get_or_insert((j, ph.slot_type.clone()));
                words.push(tok.clone());
            }
        }
    }
    flush(&mut partial, &mut words);
    let text = words.join(" ");
    match unresolved {
        Some((index, slot_type)) => Err(Seq2SeqError::UnresolvedPlaceholder {
            index,
            slot_type,
            partial: text,
            mapping,
        }),
        None => Ok(Resolution {
            text,
            mapping,
            type_fallback,
        }),
    }
}

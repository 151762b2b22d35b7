//! N-gram language model and perplexity-ranked corpus filtering.
//!
//! The filter keeps the out-of-domain sentences that look most like the
//! in-domain titles: train an LM on the titles, tokenize, drop sentences
//! shorter than `min_len` tokens, score by perplexity, sort ascending and keep
//! the first `top_k`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_MIN_LEN: usize = 5;
/// Production selection size.
pub const DEFAULT_TOP_K: usize = 500_000;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("language model needs at least one training title")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("interpolation weights must be {order} positive values summing to 1")]
    BadWeights { order: usize },
}

/// Interpolated n-gram model.
///
/// `P(w|h) = Σ_k λ_k Q_k(w|h)` where `Q_1` is the add-α unigram estimate and
/// `Q_k` is the maximum-likelihood k-gram estimate, falling back to `Q_{k-1}`
/// when the context was never observed. Every `Q_k` is a distribution over
/// the vocabulary plus UNK, so the mixture is one too, and `λ_1 > 0` keeps
/// every probability strictly positive.
#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    alpha: f64,
    /// Highest order first.
    weights: Vec<f64>,
    vocab: HashSet<String>,
    /// `counts[k]` maps a (k+1)-gram to its count.
    counts: Vec<HashMap<Vec<String>, u64>>,
    /// `context_counts[k]` maps a k-token context to how often it preceded
    /// a predicted token.
    context_counts: Vec<HashMap<Vec<String>, u64>>,
    total_tokens: u64,
}

/// Default interpolation weights, highest order first.
pub fn default_weights(order: usize) -> Vec<f64> {
    match order {
        1 => vec![1.0],
        2 => vec![0.6, 0.4],
        3 => vec![0.5, 0.3, 0.2],
        n => {
            // Geometric decay normalized to one.
            let raw: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / sum).collect()
        }
    }
}

impl NGramLm {
    pub fn train<S: AsRef<str>>(titles: &[Vec<S>], order: usize) -> Result<Self, LmError> {
        Self::train_with(titles, order, default_weights(order), DEFAULT_ALPHA)
    }

    pub fn train_with<S: AsRef<str>>(
        titles: &[Vec<S>],
        order: usize,
        weights: Vec<f64>,
        alpha: f64,
    ) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::ZeroOrder);
        }
        if titles.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let sum: f64 = weights.iter().sum();
        if weights.len() != order || weights.iter().any(|&w| w <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(LmError::BadWeights { order });
        }
        let mut lm = NGramLm {
            order,
            alpha,
            weights,
            vocab: HashSet::new(),
            counts: vec![HashMap::new(); order],
            context_counts: vec![HashMap::new(); order],
            total_tokens: 0,
        };
        for title in titles {
            let padded = pad(title.iter().map(|t| t.as_ref()), order);
            for pos in (order - 1)..padded.len() {
                let word = &padded[pos];
                lm.vocab.insert(word.clone());
                lm.total_tokens += 1;
                for n in 1..=order {
                    let gram = padded[pos + 1 - n..=pos].to_vec();
                    let context = gram[..n - 1].to_vec();
                    *lm.counts[n - 1].entry(gram).or_default() += 1;
                    *lm.context_counts[n - 1].entry(context).or_default() += 1;
                }
            }
        }
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary including the end marker but not UNK.
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    fn map_token<'a>(&self, token: &'a str) -> &'a str {
        if self.vocab.contains(token) {
            token
        } else {
            UNK
        }
    }

    /// Unsmoothed relative frequency of a token.
    pub fn ml_unigram(&self, token: &str) -> f64 {
        let c = self.counts[0].get(&vec![token.to_string()]).copied().unwrap_or(0);
        c as f64 / self.total_tokens as f64
    }

    fn unigram(&self, token: &str) -> f64 {
        let c = self.counts[0].get(&vec![token.to_string()]).copied().unwrap_or(0);
        let types = (self.vocab.len() + 1) as f64;
        (c as f64 + self.alpha) / (self.total_tokens as f64 + self.alpha * types)
    }

    /// `Q_n(token | history)` using the last `n-1` history tokens.
    fn component(&self, n: usize, history: &[String], token: &str) -> f64 {
        if n == 1 {
            return self.unigram(token);
        }
        let context = history[history.len() + 1 - n..].to_vec();
        match self.context_counts[n - 1].get(&context) {
            Some(&ctx) if ctx > 0 => {
                let mut gram = context;
                gram.push(token.to_string());
                let c = self.counts[n - 1].get(&gram).copied().unwrap_or(0);
                c as f64 / ctx as f64
            }
            _ => self.component(n - 1, history, token),
        }
    }

    /// Interpolated probability of `token` after `history`; `history` must
    /// hold at least `order - 1` (padded) tokens.
    pub fn prob(&self, history: &[String], token: &str) -> f64 {
        let token = self.map_token(token);
        (1..=self.order)
            .map(|n| self.weights[self.order - n] * self.component(n, history, token))
            .sum()
    }

    pub fn perplexity<S: AsRef<str>>(&self, sentence: &[S]) -> Result<f64, LmError> {
        if sentence.is_empty() {
            return Err(LmError::EmptySentence);
        }
        let padded = pad(sentence.iter().map(|t| t.as_ref()), self.order);
        let history: Vec<String> = padded
            .iter()
            .map(|t| self.map_token(t).to_string())
            .collect();
        let mut log_sum = 0.0;
        let mut count = 0usize;
        for pos in (self.order - 1)..padded.len() {
            log_sum += self.prob(&history[..pos], &padded[pos]).ln();
            count += 1;
        }
        Ok((-log_sum / count as f64).exp())
    }
}

fn pad<'a>(tokens: impl Iterator<Item = &'a str>, order: usize) -> Vec<String> {
    let mut out: Vec<String> = std::iter::repeat(BOS.to_string()).take(order - 1).collect();
    out.extend(tokens.map(String::from));
    out.push(EOS.to_string());
    out
}

/// Token counts after each filtering step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub tokenized: usize,
    pub after_length_filter: usize,
    pub scored: usize,
    pub selected: usize,
    pub min_len: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub index: usize,
    pub text: String,
    pub perplexity: f64,
}

pub fn tokenize(sentence: &str) -> Vec<&str> {
    sentence.split_whitespace().collect()
}

/// Keeps the `top_k` lowest-perplexity sentences of at least `min_len`
/// tokens, in ascending perplexity order (ties by corpus position).
pub fn filter_corpus<S: AsRef<str>>(
    lm: &NGramLm,
    corpus: &[S],
    min_len: usize,
    top_k: usize,
) -> (Vec<ScoredSentence>, FilterReport) {
    let tokenized: Vec<Vec<&str>> = corpus.iter().map(|s| tokenize(s.as_ref())).collect();
    let mut scored: Vec<ScoredSentence> = tokenized
        .iter()
        .enumerate()
        .filter(|(_, toks)| toks.len() >= min_len && !toks.is_empty())
        .map(|(index, toks)| ScoredSentence {
            index,
            text: corpus[index].as_ref().to_string(),
            perplexity: lm.perplexity(toks).expect("non-empty sentence"),
        })
        .collect();
    let after_length_filter = scored.len();
    scored.sort_by(|a, b| {
        a.perplexity
            .total_cmp(&b.perplexity)
            .then_with(|| a.index.cmp(&b.index))
    });
    scored.truncate(top_k);
    let report = FilterReport {
        input: corpus.len(),
        tokenized: tokenized.len(),
        after_length_filter,
        scored: after_length_filter,
        selected: scored.len(),
        min_len,
        top_k,
    };
    (scored, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn unigram_symmetry() {
        let lm = NGramLm::train(&sents(&["a b"]), 1).unwrap();
        assert_eq!(lm.ml_unigram("a"), lm.ml_unigram("b"));
        assert!((lm.prob(&[], "a") - lm.prob(&[], "b")).abs() < 1e-15);
    }

    #[test]
    fn uniform_unigram() {
        // Each of k symbols (three words plus the end marker) is equally frequent.
        let lm = NGramLm::train(&sents(&["a b c"; 50]), 1).unwrap();
        for t in ["a", "b", "c", EOS] {
            assert!((lm.ml_unigram(t) - 0.25).abs() < 1e-12);
        }
        let ppl = lm.perplexity(&["c", "a", "b", "a"]).unwrap();
        assert!((ppl - 4.0).abs() < 0.01, "ppl = {ppl}");
    }

    #[test]
    fn distributions_sum_to_one() {
        let lm = NGramLm::train(&sents(&["a b a c", "b c", "c c a"]), 3).unwrap();
        let mut symbols: Vec<String> = lm.vocab().map(String::from).collect();
        symbols.push(UNK.to_string());
        let mut contexts: Vec<Vec<String>> = Vec::new();
        for x in [BOS, "a", "b", "c", UNK] {
            for y in [BOS, "a", "b", "c", UNK] {
                contexts.push(vec![x.to_string(), y.to_string()]);
            }
        }
        for ctx in contexts {
            let total: f64 = symbols.iter().map(|s| lm.prob(&ctx, s)).sum();
            assert!((total - 1.0).abs() < 1e-12, "context {ctx:?} sums to {total}");
            assert!(symbols.iter().all(|s| lm.prob(&ctx, s) > 0.0));
        }
    }

    #[test]
    fn training_title_beats_its_reversal() {
        let lm = NGramLm::train(&sents(&["red leather phone case"]), 3).unwrap();
        let forward = lm.perplexity(&["red", "leather", "phone", "case"]).unwrap();
        let reversed = lm.perplexity(&["case", "phone", "leather", "red"]).unwrap();
        assert!(forward < reversed);
    }

    #[test]
    fn all_unknown_sentence_is_worst() {
        let lm = NGramLm::train(&sents(&["a b", "b a b"]), 2).unwrap();
        // Enumerate every length-2 sentence over {a, b, x} where x is unseen.
        let alphabet = ["a", "b", "x"];
        let mut worst = ("", "", 0.0f64);
        for s in alphabet {
            for t in alphabet {
                let p = lm.perplexity(&[s, t]).unwrap();
                if p > worst.2 {
                    worst = (s, t, p);
                }
            }
        }
        assert_eq!((worst.0, worst.1), ("x", "x"));
    }

    #[test]
    fn errors() {
        let lm = NGramLm::train(&sents(&["a"]), 2).unwrap();
        assert!(matches!(lm.perplexity::<&str>(&[]), Err(LmError::EmptySentence)));
        assert!(NGramLm::train::<String>(&[], 2).is_err());
        assert!(NGramLm::train(&sents(&["a"]), 0).is_err());
        assert!(NGramLm::train_with(&sents(&["a"]), 2, vec![0.5, 0.4], 0.1).is_err());
    }

    #[test]
    fn short_sentences_are_dropped() {
        let lm = NGramLm::train(&sents(&["a b c d e"]), 3).unwrap();
        let (out, report) = filter_corpus(&lm, &["a b", "a b c", "a b c d"], 5, 10);
        assert!(out.is_empty());
        assert_eq!(report.after_length_filter, 0);
    }

    #[test]
    fn selection_is_sorted_prefix() {
        let lm = NGramLm::train(&sents(&["a b c d e f", "a b c d e"]), 3).unwrap();
        let corpus = ["f e d c b a", "a b c d e f", "a b c d e", "x y z w v", "a b c d e"];
        let (all, report) = filter_corpus(&lm, &corpus, 5, 100);
        assert_eq!(report.selected, 5);
        assert!(all.windows(2).all(|w| w[0].perplexity <= w[1].perplexity));
        // Equal sentences keep corpus order.
        let dup: Vec<usize> = all.iter().filter(|s| s.text == "a b c d e").map(|s| s.index).collect();
        assert_eq!(dup, vec![2, 4]);
        let (top2, _) = filter_corpus(&lm, &corpus, 5, 2);
        assert_eq!(top2, all[..2].to_vec());
        assert_eq!(DEFAULT_TOP_K, 500_000);
    }
}

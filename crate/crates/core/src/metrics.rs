//! Corpus-level BLEU, chrF and TER for generated titles.
//!
//! All three take cased, detokenized strings. BLEU tokenizes internally with
//! the mteval-v13a rules; chrF works on characters with whitespace removed;
//! TER splits on whitespace.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty reference")]
    EmptyReference,
    #[error("no sentences to score")]
    EmptyCorpus,
}

fn check_lengths<A, B>(hyps: &[A], refs: &[B]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

static PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40\x2F])").unwrap());
static PERIOD_COMMA_BEFORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").unwrap());
static PERIOD_COMMA_AFTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").unwrap());
static DASH_AFTER_DIGIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").unwrap());

/// mteval-v13a tokenization.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut text = line
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if text.contains('&') {
        text = text
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let text = format!(" {text} ");
    let text = PUNCT.replace_all(&text, " $1 ");
    let text = PERIOD_COMMA_BEFORE.replace_all(&text, "$1 $2 ");
    let text = PERIOD_COMMA_AFTER.replace_all(&text, " $1 $2");
    let text = DASH_AFTER_DIGIT.replace_all(&text, "$1 $2 ");
    text.split_whitespace().map(String::from).collect()
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for gram in items.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

/// Sufficient statistics for corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of_sentence(hyp: &str, reference: &str) -> Self {
        let h = tokenize_13a(hyp);
        let r = tokenize_13a(reference);
        let mut stats = BleuStats {
            hyp_len: h.len(),
            ref_len: r.len(),
            ..Default::default()
        };
        for n in 1..=4 {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            stats.totals[n - 1] = h.len().saturating_sub(n - 1);
            stats.matches[n - 1] = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..4 {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU-4 as a percentage; 0 when any n-gram order has no match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_precision: f64 = (0..4)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / 4.0;
        let bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp();
        100.0 * bp * log_precision.exp()
    }
}

pub fn bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<f64, MetricError> {
    check_lengths(hyps, refs)?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::of_sentence(h.as_ref(), r.as_ref()));
    }
    Ok(total.score())
}

pub const CHRF_ORDER: usize = 6;

/// Per-order character n-gram statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChrfStats {
    pub matches: Vec<usize>,
    pub hyp_totals: Vec<usize>,
    pub ref_totals: Vec<usize>,
}

impl ChrfStats {
    pub fn new(max_n: usize) -> Self {
        ChrfStats {
            matches: vec![0; max_n],
            hyp_totals: vec![0; max_n],
            ref_totals: vec![0; max_n],
        }
    }

    pub fn of_sentence(hyp: &str, reference: &str, max_n: usize) -> Self {
        let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        let mut stats = ChrfStats::new(max_n);
        for n in 1..=max_n {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            stats.hyp_totals[n - 1] = hc.values().sum();
            stats.ref_totals[n - 1] = rc.values().sum();
            stats.matches[n - 1] = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &ChrfStats) {
        for n in 0..self.matches.len() {
            self.matches[n] += other.matches[n];
            self.hyp_totals[n] += other.hyp_totals[n];
            self.ref_totals[n] += other.ref_totals[n];
        }
    }

    /// F-beta over precision and recall averaged across the orders for which
    /// either side has n-grams.
    pub fn score(&self, beta: f64) -> f64 {
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut orders = 0usize;
        for n in 0..self.matches.len() {
            let (hyp, reference) = (self.hyp_totals[n], self.ref_totals[n]);
            if hyp == 0 && reference == 0 {
                continue;
            }
            orders += 1;
            if hyp > 0 {
                precision += self.matches[n] as f64 / hyp as f64;
            }
            if reference > 0 {
                recall += self.matches[n] as f64 / reference as f64;
            }
        }
        if orders == 0 {
            return 0.0;
        }
        precision /= orders as f64;
        recall /= orders as f64;
        let b2 = beta * beta;
        let denom = b2 * precision + recall;
        if denom == 0.0 {
            return 0.0;
        }
        100.0 * (1.0 + b2) * precision * recall / denom
    }
}

pub fn chrf<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    beta: f64,
    max_n: usize,
) -> Result<f64, MetricError> {
    check_lengths(hyps, refs)?;
    let mut total = ChrfStats::new(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&ChrfStats::of_sentence(h.as_ref(), r.as_ref(), max_n));
    }
    Ok(total.score(beta))
}

/// chrF with β = 1 and n ≤ 6.
pub fn chrf1<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<f64, MetricError> {
    chrf(hyps, refs, 1.0, CHRF_ORDER)
}

pub const TER_MAX_SHIFT_LEN: usize = 10;
pub const TER_MAX_CANDIDATES: usize = 1000;

/// Edit counts for one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerStats {
    pub edits: f64,
    pub shifts: usize,
    pub ref_len: usize,
}

impl TerStats {
    pub fn rate(&self) -> f64 {
        self.edits / self.ref_len as f64
    }
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Moves `hyp[start..start+len]` so that it begins at index `dest` of the
/// sequence with the span removed.
pub fn apply_shift<T: Clone>(hyp: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let span = &hyp[start..start + len];
    let mut rest: Vec<T> = hyp[..start].to_vec();
    rest.extend_from_slice(&hyp[start + len..]);
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(span);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Word edits plus block shifts, using a greedy shift search that applies
/// the shift with the largest edit-distance reduction until none helps.
pub fn ter_stats(hyp: &str, reference: &str) -> Result<TerStats, MetricError> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let mut h: Vec<&str> = hyp.split_whitespace().collect();
    let mut distance = levenshtein(&h, &r);
    let mut shifts = 0usize;
    let mut budget = TER_MAX_CANDIDATES;
    'search: while distance > 0 && budget > 0 {
        let mut best: Option<(usize, Vec<&str>)> = None;
        for start in 0..h.len() {
            for len in 1..=TER_MAX_SHIFT_LEN.min(h.len() - start) {
                let span = &h[start..start + len];
                // Only spans that occur in the reference can be aligned by a shift.
                if !r.windows(len).any(|w| w == span) {
                    break;
                }
                for dest in 0..=(h.len() - len) {
                    if dest == start {
                        continue;
                    }
                    if budget == 0 {
                        break 'search;
                    }
                    budget -= 1;
                    let shifted = apply_shift(&h, start, len, dest);
                    let d = levenshtein(&shifted, &r);
                    if d < distance && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, shifted));
                    }
                }
            }
        }
        match best {
            Some((d, shifted)) => {
                h = shifted;
                distance = d;
                shifts += 1;
            }
            None => break,
        }
    }
    Ok(TerStats {
        edits: (distance + shifts) as f64,
        shifts,
        ref_len: r.len(),
    })
}

/// Sentence TER as a fraction (not a percentage).
pub fn ter(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    Ok(ter_stats(hyp, reference)?.rate())
}

/// Corpus TER: total edits over total reference words, as a percentage.
pub fn corpus_ter<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<f64, MetricError> {
    check_lengths(hyps, refs)?;
    let mut edits = 0.0;
    let mut words = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        let s = ter_stats(h.as_ref(), r.as_ref())?;
        edits += s.edits;
        words += s.ref_len;
    }
    Ok(100.0 * edits / words as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub bleu: f64,
    pub chrf1: f64,
    pub ter: f64,
}

/// Corpus scores as percentages plus a per-sentence breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub chrf1: f64,
    pub ter: f64,
    pub sentences: usize,
    pub per_sentence: Vec<SentenceScore>,
}

pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<EvalReport, MetricError> {
    check_lengths(hyps, refs)?;
    let mut bleu_total = BleuStats::default();
    let mut chrf_total = ChrfStats::new(CHRF_ORDER);
    let mut edits = 0.0;
    let mut ref_words = 0usize;
    let mut per_sentence = Vec::with_capacity(hyps.len());
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (h.as_ref(), r.as_ref());
        let b = BleuStats::of_sentence(h, r);
        let c = ChrfStats::of_sentence(h, r, CHRF_ORDER);
        let t = ter_stats(h, r)?;
        per_sentence.push(SentenceScore {
            bleu: b.score(),
            chrf1: c.score(1.0),
            ter: 100.0 * t.rate(),
        });
        bleu_total.add(&b);
        chrf_total.add(&c);
        edits += t.edits;
        ref_words += t.ref_len;
    }
    Ok(EvalReport {
        bleu: bleu_total.score(),
        chrf1: chrf_total.score(1.0),
        ter: 100.0 * edits / ref_words as f64,
        sentences: hyps.len(),
        per_sentence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_13a() {
        assert_eq!(tokenize_13a("Cell Phones & Smart Phones"), vec!["Cell", "Phones", "&", "Smart", "Phones"]);
        assert_eq!(tokenize_13a("Hello, world."), vec!["Hello", ",", "world", "."]);
        assert_eq!(tokenize_13a("3.5 inch, 1,000"), vec!["3.5", "inch", ",", "1,000"]);
        assert_eq!(tokenize_13a("d'embrayage (x)"), vec!["d'embrayage", "(", "x", ")"]);
        assert_eq!(tokenize_13a("10-pack"), vec!["10", "-", "pack"]);
        assert_eq!(tokenize_13a("a &amp; b"), vec!["a", "&", "b"]);
    }

    #[test]
    fn bleu_trivial_cases() {
        let refs = ["the quick brown fox jumps"];
        assert_eq!(bleu(&refs, &refs).unwrap(), 100.0);
        assert_eq!(bleu(&[""], &refs).unwrap(), 0.0);
        assert_eq!(
            bleu(&["a"], &["a", "b"]),
            Err(MetricError::LengthMismatch { hyps: 1, refs: 2 })
        );
    }

    #[test]
    fn bleu_short_hypothesis_has_no_fourgrams() {
        // 1..3-gram precisions are all 1, but there is no 4-gram at all, so
        // the unsmoothed corpus score is 0.
        let s = BleuStats::of_sentence("the cat sat", "the cat sat down");
        assert_eq!(s.matches, [3, 2, 1, 0]);
        assert_eq!(s.totals, [3, 2, 1, 0]);
        assert_eq!(s.score(), 0.0);
    }

    #[test]
    fn ter_basic() {
        assert_eq!(ter("a b c d e", "a b c d e").unwrap(), 0.0);
        assert!((ter("a b x d e", "a b c d e").unwrap() - 0.2).abs() < 1e-12);
        let s = ter_stats("a c b d e", "a b c d e").unwrap();
        assert_eq!(s.shifts, 1);
        assert!((s.rate() - 0.2).abs() < 1e-12);
        assert_eq!(ter("a", ""), Err(MetricError::EmptyReference));
    }

    #[test]
    fn chrf_trivial() {
        assert_eq!(chrf1(&["abcd"], &["abcd"]).unwrap(), 100.0);
        assert_eq!(chrf1(&["abc"], &["xyz"]).unwrap(), 0.0);
    }

    #[test]
    fn report_is_stable() {
        let r = evaluate(&["a b c d"], &["a b c d"]).unwrap();
        assert_eq!((r.bleu, r.chrf1, r.ter), (100.0, 100.0, 0.0));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with("{\"bleu\":100.0,\"chrf1\":100.0,\"ter\":0.0,\"sentences\":1"));
    }

    #[test]
    fn apply_shift_moves_block() {
        assert_eq!(apply_shift(&[1, 2, 3, 4, 5], 0, 2, 3), vec![3, 4, 5, 1, 2]);
        assert_eq!(apply_shift(&[1, 2, 3, 4, 5], 3, 1, 0), vec![4, 1, 2, 3, 5]);
    }
}

//! Byte pair encoding with protected tokens.
//!
//! Slot tags (`_brand`), placeholders (`$brand`) and language tags (`<2fr>`)
//! are never split. Non-final subwords carry the `@@` continuation marker.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

pub const CONTINUATION: &str = "@@";
pub const CODES_HEADER: &str = "#version: slotgen-bpe 1";
/// Production merge count.
pub const DEFAULT_MERGES: usize = 30_000;
const MIN_PAIR_COUNT: i64 = 2;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("final token `{0}` carries a dangling continuation marker")]
    DanglingMarker(String),
    #[error("codes file: {0}")]
    BadCodes(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token patterns exempt from splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Protected {
    Prefix(String),
    /// `<2xx>` target-language tags.
    LanguageTag,
}

impl Protected {
    pub fn defaults() -> Vec<Protected> {
        vec![
            Protected::Prefix("_".into()),
            Protected::Prefix("$".into()),
            Protected::LanguageTag,
        ]
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Protected::Prefix(p) => token.starts_with(p.as_str()),
            Protected::LanguageTag => is_language_tag(token),
        }
    }
}

pub fn is_language_tag(token: &str) -> bool {
    token
        .strip_prefix("<2")
        .and_then(|t| t.strip_suffix('>'))
        .is_some_and(|code| !code.is_empty() && code.chars().all(|c| c.is_ascii_lowercase()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    protected: Vec<Protected>,
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>, protected: Vec<Protected>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, pair)| (pair.clone(), i))
            .collect();
        BpeModel {
            merges,
            ranks,
            protected,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn is_protected(&self, token: &str) -> bool {
        self.protected.iter().any(|p| p.matches(token))
    }

    /// Splits a single word into subword units (without markers).
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Encodes tokens into subwords with continuation markers.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        for token in tokens {
            let token = token.as_ref();
            if self.is_protected(token) {
                out.push(token.to_string());
                continue;
            }
            let pieces = self.segment(token);
            let last = pieces.len().saturating_sub(1);
            for (i, piece) in pieces.into_iter().enumerate() {
                if i < last {
                    out.push(format!("{piece}{CONTINUATION}"));
                } else {
                    out.push(piece);
                }
            }
        }
        out
    }

    pub fn write_codes<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "{CODES_HEADER}")?;
        for (l, r) in &self.merges {
            writeln!(writer, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn codes_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_codes(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("codes are UTF-8")
    }

    pub fn read_codes<R: BufRead>(reader: R) -> Result<Self, BpeError> {
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(header)) if header.trim_end() == CODES_HEADER => {}
            Some(Ok(other)) => return Err(BpeError::BadCodes(format!("unexpected header `{other}`"))),
            Some(Err(e)) => return Err(e.into()),
            None => return Err(BpeError::BadCodes("empty codes file".into())),
        }
        let mut merges = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(BpeError::BadCodes(format!(
                        "line {}: expected `left right`",
                        idx + 2
                    )))
                }
            }
        }
        Ok(BpeModel::from_merges(merges, Protected::defaults()))
    }

    pub fn load(path: &Path) -> Result<Self, BpeError> {
        let file = std::fs::File::open(path)?;
        Self::read_codes(std::io::BufReader::new(file))
    }
}

/// Learns merges greedily: each iteration merges the most frequent adjacent
/// pair (ties to the lexicographically smallest pair) until `num_merges`
/// merges are recorded or no pair occurs twice.
pub fn bpe_train<S: AsRef<str>>(
    corpus: &[Vec<S>],
    num_merges: usize,
    protected: Vec<Protected>,
) -> BpeModel {
    let probe = BpeModel::from_merges(Vec::new(), protected);
    let mut word_freq: HashMap<&str, i64> = HashMap::new();
    for sentence in corpus {
        for token in sentence {
            let token = token.as_ref();
            if !probe.is_protected(token) {
                *word_freq.entry(token).or_default() += 1;
            }
        }
    }
    // Sorted for a deterministic word numbering.
    let mut entries: Vec<(&str, i64)> = word_freq.into_iter().collect();
    entries.sort();
    let mut words: Vec<Vec<String>> = entries
        .iter()
        .map(|(w, _)| w.chars().map(String::from).collect())
        .collect();
    let freqs: Vec<i64> = entries.iter().map(|&(_, f)| f).collect();

    let mut pair_counts: HashMap<(String, String), i64> = HashMap::new();
    let mut pair_words: HashMap<(String, String), HashSet<usize>> = HashMap::new();
    for (wi, symbols) in words.iter().enumerate() {
        for w in symbols.windows(2) {
            let pair = (w[0].clone(), w[1].clone());
            *pair_counts.entry(pair.clone()).or_default() += freqs[wi];
            pair_words.entry(pair).or_default().insert(wi);
        }
    }
    let mut queue: BTreeSet<(Reverse<i64>, String, String)> = pair_counts
        .iter()
        .map(|((l, r), &c)| (Reverse(c), l.clone(), r.clone()))
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some(top) = queue.first().cloned() else { break };
        let (Reverse(count), left, right) = top;
        if count < MIN_PAIR_COUNT {
            break;
        }
        let merged = format!("{left}{right}");
        let mut affected: Vec<usize> = pair_words
            .get(&(left.clone(), right.clone()))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        affected.sort_unstable();

        let mut deltas: HashMap<(String, String), i64> = HashMap::new();
        for wi in affected {
            let freq = freqs[wi];
            let old = &words[wi];
            for w in old.windows(2) {
                *deltas.entry((w[0].clone(), w[1].clone())).or_default() -= freq;
            }
            let mut new_symbols = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && old[i] == left && old[i + 1] == right {
                    new_symbols.push(merged.clone());
                    i += 2;
                } else {
                    new_symbols.push(old[i].clone());
                    i += 1;
                }
            }
            for w in new_symbols.windows(2) {
                let pair = (w[0].clone(), w[1].clone());
                *deltas.entry(pair.clone()).or_default() += freq;
                pair_words.entry(pair).or_default().insert(wi);
            }
            words[wi] = new_symbols;
        }
        for (pair, delta) in deltas {
            if delta == 0 {
                continue;
            }
            let count = pair_counts.entry(pair.clone()).or_default();
            queue.remove(&(Reverse(*count), pair.0.clone(), pair.1.clone()));
            *count += delta;
            if *count > 0 {
                queue.insert((Reverse(*count), pair.0.clone(), pair.1.clone()));
            } else {
                pair_counts.remove(&pair);
                pair_words.remove(&pair);
            }
        }
        merges.push((left, right));
    }
    BpeModel::from_merges(merges, probe.protected)
}

/// Joins every token ending in `@@` with its successor.
pub fn bpe_decode<S: AsRef<str>>(subwords: &[S]) -> Result<Vec<String>, BpeError> {
    let mut out = Vec::new();
    let mut pending = String::new();
    for sub in subwords {
        let sub = sub.as_ref();
        match sub.strip_suffix(CONTINUATION) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(sub);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if let Some(last) = subwords.last() {
        if last.as_ref().ends_with(CONTINUATION) {
            return Err(BpeError::DanglingMarker(last.as_ref().to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    /// Brute-force oracle: recount all pairs from scratch each iteration.
    fn naive_train(corpus: &[Vec<String>], num_merges: usize) -> Vec<(String, String)> {
        let mut words: Vec<Vec<String>> = corpus
            .iter()
            .flatten()
            .filter(|t| !t.starts_with('_') && !t.starts_with('$') && !is_language_tag(t))
            .map(|t| t.chars().map(String::from).collect())
            .collect();
        let mut merges = Vec::new();
        for _ in 0..num_merges {
            let mut counts: std::collections::BTreeMap<(String, String), i64> = Default::default();
            for w in &words {
                for p in w.windows(2) {
                    *counts.entry((p[0].clone(), p[1].clone())).or_default() += 1;
                }
            }
            let best = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
            let Some((pair, c)) = best else { break };
            if c < 2 {
                break;
            }
            for w in words.iter_mut() {
                let mut out = Vec::new();
                let mut i = 0;
                while i < w.len() {
                    if i + 1 < w.len() && w[i] == pair.0 && w[i + 1] == pair.1 {
                        out.push(format!("{}{}", pair.0, pair.1));
                        i += 2;
                    } else {
                        out.push(w[i].clone());
                        i += 1;
                    }
                }
                *w = out;
            }
            merges.push(pair);
        }
        merges
    }

    #[test]
    fn single_merge() {
        let model = bpe_train(&corpus(&["aaab aaab"]), 1, Protected::defaults());
        assert_eq!(model.merges(), &[("a".to_string(), "a".to_string())]);
    }

    #[test]
    fn zero_merges_is_character_model() {
        let model = bpe_train(&corpus(&["low lower"]), 0, Protected::defaults());
        assert!(model.merges().is_empty());
        assert_eq!(model.encode(&["low"]), vec!["l@@", "o@@", "w"]);
    }

    #[test]
    fn matches_naive_trainer() {
        let c = corpus(&[
            "low lower lowest newer wider new",
            "_brand $brand newest low low widest",
            "<2fr> lowering renewed",
        ]);
        for n in [1, 3, 8, 20, 100] {
            let model = bpe_train(&c, n, Protected::defaults());
            assert_eq!(model.merges(), naive_train(&c, n).as_slice(), "num_merges={n}");
        }
    }

    #[test]
    fn protected_tokens_pass_through() {
        let model = bpe_train(&corpus(&["brand brand brand"]), 10, Protected::defaults());
        assert_eq!(
            model.encode(&["$brand", "_brand", "<2fr>", "$brand|AC▁ME"]),
            vec!["$brand", "_brand", "<2fr>", "$brand|AC▁ME"]
        );
        assert!(model.merges().iter().all(|(l, r)| !l.starts_with('_') && !l.starts_with('$') && !r.is_empty()));
    }

    #[test]
    fn saturated_word_is_unchanged() {
        let model = bpe_train(&corpus(&["phone phone phone"]), 50, Protected::defaults());
        assert_eq!(model.encode(&["phone"]), vec!["phone"]);
    }

    #[test]
    fn unseen_word_follows_merge_trace() {
        let model = bpe_train(
            &corpus(&["unseen unseen seen word word words"]),
            100,
            Protected::defaults(),
        );
        let merges = model.merges().to_vec();
        // Oracle: replay the merge list in order over the character sequence,
        // merging every occurrence of each pair in turn.
        let mut symbols: Vec<String> = "unseenword".chars().map(String::from).collect();
        for (l, r) in &merges {
            let mut out = Vec::new();
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == l && &symbols[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = out;
        }
        assert_eq!(model.segment("unseenword"), symbols);
    }

    #[test]
    fn decode_joins_markers() {
        assert_eq!(bpe_decode(&["lo@@", "w"]).unwrap(), vec!["low"]);
        assert!(bpe_decode::<&str>(&[]).unwrap().is_empty());
        assert!(matches!(bpe_decode(&["lo@@"]), Err(BpeError::DanglingMarker(_))));
    }

    #[test]
    fn codes_file_round_trip() {
        let model = bpe_train(&corpus(&["lower lowest low newer"]), 10, Protected::defaults());
        let text = model.codes_string();
        assert!(text.starts_with(CODES_HEADER));
        let back = BpeModel::read_codes(text.as_bytes()).unwrap();
        assert_eq!(back, model);
        assert!(BpeModel::read_codes("a b\n".as_bytes()).is_err());
        assert!(BpeModel::read_codes(format!("{CODES_HEADER}\na b c\n").as_bytes()).is_err());
    }

    #[test]
    fn language_tag_pattern() {
        assert!(is_language_tag("<2fr>"));
        assert!(!is_language_tag("<2>"));
        assert!(!is_language_tag("<2FR>"));
        assert!(!is_language_tag("2fr"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_inverts_encode(
                train in proptest::collection::vec(proptest::collection::vec("[a-eé]{1,7}", 1..8), 1..6),
                input in proptest::collection::vec("([a-gé]{1,9}|_[a-z]{1,4}|\\$[a-z]{1,4})", 0..12),
                merges in 0usize..40,
            ) {
                let model = bpe_train(&train, merges, Protected::defaults());
                let encoded = model.encode(&input);
                prop_assert_eq!(bpe_decode(&encoded).unwrap(), input);
            }
        }
    }
}

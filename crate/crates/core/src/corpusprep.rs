//! Parallel corpora, the shared vocabulary and multilingual mixtures.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subword::is_language_tag;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
pub const DEFAULT_MAX_VOCAB: usize = 50_000;

/// Languages with a target-language tag.
pub const KNOWN_LANGUAGES: [&str; 3] = ["en", "de", "fr"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("example source already starts with language tag `{0}`")]
    AlreadyTagged(String),
    #[error("empty source or target")]
    EmptySide,
    #[error("no examples")]
    EmptyCorpus,
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("mixture has no member corpora")]
    EmptyMixture,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub language: String,
}

impl ParallelExample {
    pub fn new(source: Vec<String>, target: Vec<String>, language: &str) -> Result<Self, CorpusError> {
        if source.is_empty() || target.is_empty() {
            return Err(CorpusError::EmptySide);
        }
        Ok(ParallelExample {
            source,
            target,
            language: language.to_string(),
        })
    }

    pub fn from_text(source: &str, target: &str, language: &str) -> Result<Self, CorpusError> {
        Self::new(split(source), split(target), language)
    }
}

fn split(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Reads `source<TAB>target<TAB>lang` lines.
pub fn read_parallel_tsv<R: BufRead>(reader: R, origin: &str) -> Result<Vec<ParallelExample>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        out.push(ParallelExample::from_text(cols[0], cols[1], cols[2].trim()).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn load_parallel_tsv(path: &Path) -> Result<Vec<ParallelExample>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_parallel_tsv(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_parallel_tsv<W: Write>(mut writer: W, examples: &[ParallelExample]) -> std::io::Result<()> {
    for ex in examples {
        writeln!(writer, "{}\t{}\t{}", ex.source.join(" "), ex.target.join(" "), ex.language)?;
    }
    Ok(())
}

/// Token ↔ id mapping shared by source and target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from tokens in id order, reserved tokens first.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, ids }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.ids = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn write_tsv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(writer, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut tokens = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| CorpusError::Parse {
                path: "vocabulary".into(),
                line: idx + 1,
                message: m.to_string(),
            };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| err("expected `token<TAB>id`"))?;
            let id: usize = id.trim().parse().map_err(|_| err("id is not an integer"))?;
            if id != tokens.len() {
                return Err(err("ids must be contiguous from 0"));
            }
            tokens.push(tok.to_string());
        }
        let reserved = [PAD, UNK, BOS, EOS];
        if tokens.len() < 4 || tokens[..4] != reserved {
            return Err(CorpusError::Parse {
                path: "vocabulary".into(),
                line: 1,
                message: "reserved tokens must occupy ids 0..3".into(),
            });
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// One vocabulary over all source and target tokens, most frequent first
/// (ties lexicographic), capped at `max_size` entries including reserved ones.
pub fn build_vocab(examples: &[ParallelExample], max_size: usize) -> Result<Vocabulary, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let reserved = [PAD, UNK, BOS, EOS];
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in examples {
        for t in ex.source.iter().chain(&ex.target) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !reserved.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        ranked
            .into_iter()
            .take(max_size.saturating_sub(reserved.len()))
            .map(|(t, _)| t.to_string()),
    );
    Ok(Vocabulary::from_tokens(tokens))
}

/// Brings every corpus to the size of the largest by whole-copy duplication
/// (the last copy truncated from the start) and interleaves the results
/// round-robin.
pub fn oversample(corpora: &[Vec<ParallelExample>]) -> Vec<ParallelExample> {
    let non_empty: Vec<&Vec<ParallelExample>> = corpora
        .iter()
        .filter(|c| {
            if c.is_empty() {
                log::warn!("skipping empty corpus during oversampling");
            }
            !c.is_empty()
        })
        .collect();
    let Some(target) = non_empty.iter().map(|c| c.len()).max() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(target * non_empty.len());
    for i in 0..target {
        for corpus in &non_empty {
            out.push(corpus[i % corpus.len()].clone());
        }
    }
    out
}

/// Turns monolingual sentences into source = target examples.
pub fn copy_augment<S: AsRef<str>>(monolingual: &[S], language: &str) -> Vec<ParallelExample> {
    monolingual
        .iter()
        .filter_map(|s| {
            let tokens = split(s.as_ref());
            ParallelExample::new(tokens.clone(), tokens, language).ok()
        })
        .collect()
}

pub fn language_tag(language: &str) -> Result<String, CorpusError> {
    if KNOWN_LANGUAGES.contains(&language) {
        Ok(format!("<2{language}>"))
    } else {
        Err(CorpusError::UnknownLanguage(language.to_string()))
    }
}

/// Prepends `<2xx>` for the example's language to its source.
pub fn tag_language(example: &ParallelExample) -> Result<ParallelExample, CorpusError> {
    let tag = language_tag(&example.language)?;
    if let Some(first) = example.source.first() {
        if is_language_tag(first) {
            return Err(CorpusError::AlreadyTagged(first.clone()));
        }
    }
    let mut source = Vec::with_capacity(example.source.len() + 1);
    source.push(tag);
    source.extend(example.source.iter().cloned());
    Ok(ParallelExample {
        source,
        target: example.target.clone(),
        language: example.language.clone(),
    })
}

/// A member corpus of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMember {
    pub language: String,
    pub path: PathBuf,
}

/// Describes a training mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub members: Vec<MixtureMember>,
    #[serde(default)]
    pub oversample: bool,
    /// Monolingual sentence files per language, added as copied pairs.
    #[serde(default)]
    pub copy_augment: BTreeMap<String, PathBuf>,
    #[serde(default = "default_true")]
    pub tag_target_language: bool,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_true() -> bool {
    true
}

fn default_max_vocab() -> usize {
    DEFAULT_MAX_VOCAB
}

/// In-memory mixture members.
#[derive(Debug, Clone, Default)]
pub struct Mixture {
    pub corpora: Vec<Vec<ParallelExample>>,
    pub monolingual: BTreeMap<String, Vec<String>>,
    pub oversample: bool,
    pub tag_target_language: bool,
}

/// Assembles a mixture: optional per-language oversampling (copied
/// monolingual data joins its language's corpus first), then language tags.
pub fn assemble(mixture: &Mixture) -> Result<Vec<ParallelExample>, CorpusError> {
    if mixture.corpora.is_empty() && mixture.monolingual.is_empty() {
        return Err(CorpusError::EmptyMixture);
    }
    let mut by_language: BTreeMap<String, Vec<ParallelExample>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for corpus in &mixture.corpora {
        for ex in corpus {
            if !order.contains(&ex.language) {
                order.push(ex.language.clone());
            }
            by_language.entry(ex.language.clone()).or_default().push(ex.clone());
        }
    }
    for (lang, sentences) in &mixture.monolingual {
        if !order.contains(lang) {
            order.push(lang.clone());
        }
        by_language
            .entry(lang.clone())
            .or_default()
            .extend(copy_augment(sentences, lang));
    }
    let grouped: Vec<Vec<ParallelExample>> = order
        .iter()
        .map(|l| by_language.remove(l).unwrap_or_default())
        .collect();
    let mixed = if mixture.oversample && grouped.len() > 1 {
        oversample(&grouped)
    } else {
        grouped.into_iter().flatten().collect()
    };
    if mixture.tag_target_language {
        mixed.iter().map(tag_language).collect()
    } else {
        Ok(mixed)
    }
}

impl MixtureSpec {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        let spec: MixtureSpec = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if spec.members.is_empty() {
            return Err(CorpusError::EmptyMixture);
        }
        Ok(spec)
    }

    /// Loads member files. Relative paths resolve against `base`.
    pub fn materialize(&self, base: &Path) -> Result<Mixture, CorpusError> {
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let mut corpora = Vec::new();
        for member in &self.members {
            let mut corpus = load_parallel_tsv(&resolve(&member.path))?;
            for ex in &mut corpus {
                ex.language = member.language.clone();
            }
            corpora.push(corpus);
        }
        let mut monolingual = BTreeMap::new();
        for (lang, path) in &self.copy_augment {
            let text = std::fs::read_to_string(resolve(path))?;
            monolingual.insert(
                lang.clone(),
                text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect(),
            );
        }
        Ok(Mixture {
            corpora,
            monolingual,
            oversample: self.oversample,
            tag_target_language: self.tag_target_language,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(src: &str, trg: &str, lang: &str) -> ParallelExample {
        ParallelExample::from_text(src, trg, lang).unwrap()
    }

    fn corpus(lang: &str, n: usize) -> Vec<ParallelExample> {
        (0..n).map(|i| ex(&format!("s{i}"), &format!("t{i}"), lang)).collect()
    }

    #[test]
    fn shared_vocabulary() {
        let v = build_vocab(&[ex("a b", "b c", "en")], 100).unwrap();
        assert_eq!(v.tokens(), &[PAD, UNK, BOS, EOS, "b", "a", "c"]);
        assert_eq!(v.id("c"), 6);
        assert_eq!(v.id("zzz"), UNK_ID);
        let capped = build_vocab(&[ex("a b", "b c", "en")], 5).unwrap();
        assert_eq!(capped.len(), 5);
        assert_eq!(capped.id("a"), UNK_ID);
        assert!(build_vocab(&[], 10).is_err());
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let v = build_vocab(&[ex("a b", "b c", "en")], 100).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(Vocabulary::read_tsv(buf.as_slice()).unwrap(), v);
        assert!(Vocabulary::read_tsv("a\t0\n".as_bytes()).is_err());
    }

    #[test]
    fn oversample_balances() {
        let out = oversample(&[corpus("en", 100), corpus("fr", 10)]);
        assert_eq!(out.iter().filter(|e| e.language == "fr").count(), 100);
        assert_eq!(out.iter().filter(|e| e.language == "en").count(), 100);
        assert_eq!(out[0].language, "en");
        assert_eq!(out[1].language, "fr");
    }

    #[test]
    fn oversample_equal_sizes_only_interleaves() {
        let (a, b) = (corpus("en", 3), corpus("fr", 3));
        let out = oversample(&[a.clone(), b.clone()]);
        assert_eq!(out, vec![a[0].clone(), b[0].clone(), a[1].clone(), b[1].clone(), a[2].clone(), b[2].clone()]);
    }

    #[test]
    fn oversample_partial_copy() {
        let small = corpus("fr", 3);
        let out: Vec<ParallelExample> = oversample(&[corpus("en", 10), small.clone()])
            .into_iter()
            .filter(|e| e.language == "fr")
            .collect();
        // Oracle: 10 = 3 * 3 + 1, so three whole copies and the first item.
        let mut expected = Vec::new();
        for _ in 0..3 {
            expected.extend(small.iter().cloned());
        }
        expected.push(small[0].clone());
        assert_eq!(out, expected);
    }

    #[test]
    fn copy_examples() {
        let out = copy_augment(&["ACME phone case", "  "], "fr");
        assert_eq!(out, vec![ex("ACME phone case", "ACME phone case", "fr")]);
    }

    #[test]
    fn language_tags() {
        let tagged = tag_language(&ex("_cat X", "X", "fr")).unwrap();
        assert_eq!(tagged.source.join(" "), "<2fr> _cat X");
        assert!(matches!(tag_language(&tagged), Err(CorpusError::AlreadyTagged(_))));
        assert!(matches!(tag_language(&ex("a", "b", "xx")), Err(CorpusError::UnknownLanguage(_))));
    }

    #[test]
    fn assembled_mixture_tags_every_example() {
        let mixture = Mixture {
            corpora: vec![corpus("en", 6), corpus("fr", 2), corpus("de", 4)],
            monolingual: BTreeMap::from([("fr".to_string(), vec!["m1 m2".to_string()])]),
            oversample: true,
            tag_target_language: true,
        };
        let out = assemble(&mixture).unwrap();
        assert_eq!(out.len(), 18);
        for e in &out {
            assert_eq!(e.source[0], format!("<2{}>", e.language));
            assert_eq!(e.source.iter().filter(|t| is_language_tag(t)).count(), 1);
        }
        // The copied pair joined the French corpus before balancing.
        assert!(out.iter().any(|e| e.source[1..] == ["m1", "m2"] && e.target == ["m1", "m2"]));
    }

    #[test]
    fn tsv_parse_errors_carry_line() {
        let err = read_parallel_tsv("a\tb\ten\nbad line\n".as_bytes(), "x.tsv").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }));
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpusprep::{language_tag, CorpusError, ParallelExample};
use crate::lexicon::{
    lexicalize, normalize, normalize_title, BrowsePage, LexiconError, PlaceholderMode, PlaceholderPolicy,
    PseudoSequence, TagMap,
};
use crate::subword::{BpeError, BpeModel, Protected};

/// Everything needed to turn a raw page into model input. Stored inside
/// checkpoints so that `generate` applies exactly the training-time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub tags: TagMap,
    /// Per-language placeholder policies; languages without one are not normalized.
    pub policies: BTreeMap<String, PlaceholderPolicy>,
    /// BPE codes file contents, when subword encoding is on.
    pub bpe_codes: Option<String>,
    pub tag_target_language: bool,
    #[serde(skip)]
    bpe: Option<BpeModel>,
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Bpe(#[from] BpeError),
    #[error("page has no title")]
    MissingTitle,
}

impl Preprocessor {
    pub fn new(
        tags: TagMap,
        policies: BTreeMap<String, PlaceholderPolicy>,
        bpe: Option<&BpeModel>,
        tag_target_language: bool,
    ) -> Self {
        Preprocessor {
            tags,
            policies,
            bpe_codes: bpe.map(BpeModel::codes_string),
            tag_target_language,
            bpe: bpe.cloned(),
        }
    }

    /// Rebuilds from the JSON stored in a checkpoint.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, PreprocessError> {
        let mut pre: Preprocessor = serde_json::from_value(value.clone())
            .map_err(|e| BpeError::BadCodes(format!("preprocessing block: {e}")))?;
        if let Some(codes) = &pre.bpe_codes {
            pre.bpe = Some(BpeModel::read_codes(codes.as_bytes())?);
        }
        Ok(pre)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("preprocessor serializes")
    }

    pub fn bpe(&self) -> Option<&BpeModel> {
        self.bpe.as_ref()
    }

    pub fn policy(&self, language: &str) -> PlaceholderPolicy {
        self.policies
            .get(language)
            .cloned()
            .unwrap_or_else(|| PlaceholderPolicy::empty(language))
    }

    /// Lexicalized and normalized source, entities retained.
    pub fn pseudo_source(&self, page: &BrowsePage) -> Result<PseudoSequence, PreprocessError> {
        let seq = lexicalize(page, &self.tags)?;
        Ok(normalize(
            &seq,
            &self.policy(&page.language).with_mode(PlaceholderMode::InferenceRetained),
        ))
    }

    pub fn subwords(&self, tokens: Vec<String>) -> Vec<String> {
        match &self.bpe {
            Some(bpe) => bpe.encode(&tokens),
            None => tokens,
        }
    }

    /// Model input for a page: pseudo source with entities, subwords and the
    /// language tag when enabled.
    pub fn source(&self, page: &BrowsePage) -> Result<Vec<String>, PreprocessError> {
        let tokens = self.subwords(self.pseudo_source(page)?.to_tokens());
        if !self.tag_target_language {
            return Ok(tokens);
        }
        let mut out = vec![language_tag(&page.language)?];
        out.extend(tokens);
        Ok(out)
    }

    /// Untagged training pair: stripped pseudo source and the title with
    /// verbatim entity occurrences replaced by placeholders.
    pub fn training_pair(&self, page: &BrowsePage) -> Result<ParallelExample, PreprocessError> {
        let title = page.title.as_deref().ok_or(PreprocessError::MissingTitle)?;
        let seq = self.pseudo_source(page)?;
        let target = normalize_title(title, &seq.entities());
        let source = seq.strip_entities().to_tokens();
        Ok(ParallelExample::new(
            self.subwords(source),
            self.subwords(target),
            &page.language,
        )?)
    }

    /// Whitespace-tokenized monolingual title, in subwords when enabled.
    pub fn monolingual_line(&self, line: &str) -> String {
        self.subwords(line.split_whitespace().map(String::from).collect())
            .join(" ")
    }
}

/// BPE protection patterns used throughout the pipeline.
pub fn protected_tokens() -> Vec<Protected> {
    Protected::defaults()
}

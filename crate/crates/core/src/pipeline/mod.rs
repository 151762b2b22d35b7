//! End-to-end runs: pages in, trained model, titles and scores out.
//!
//! [`run`] works on in-memory corpora; [`run_pipeline`] reads a JSON run
//! configuration, writes every intermediate artifact to the output directory
//! and returns the same report.

mod config;
mod preprocess;
pub mod synth;

pub use config::{model_config_from, run_pipeline, PipelineOutput, RunConfig, SCHEMA_VERSION, SEED_ENV};
pub use preprocess::{protected_tokens, PreprocessError, Preprocessor};

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusprep::{assemble, build_vocab, ParallelExample, Vocabulary, DEFAULT_MAX_VOCAB};
use crate::lexicon::{compute_top_slot_types, BrowsePage, PlaceholderMode, PlaceholderPolicy, TagMap, DEFAULT_TOP_K};
use crate::metrics::{evaluate, EvalReport};
use crate::seq2seq::{
    resolve_placeholders, train, Checkpoint, DecodeTrace, DevExample, EncoderOutput, ModelConfig, Seq2Seq,
    Seq2SeqError, StopReason, TrainConfig,
};
use crate::subword::{bpe_train, BpeModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or missing inputs, detected before any stage runs.
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{stage}{}: {message}", line.map(|l| format!(" (input line {l})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        line: Option<usize>,
        message: String,
    },
}

impl PipelineError {
    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            line: None,
            message: err.to_string(),
        }
    }

    pub fn at_line(stage: &'static str, line: usize, err: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            line: Some(line),
            message: err.to_string(),
        }
    }

    /// 2 for validation errors, 3 for failures inside a stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

/// Corpora for one run. Pages carry their language and gold title.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub train: Vec<BrowsePage>,
    /// Early-stopping set.
    pub dev: Vec<BrowsePage>,
    /// Final evaluation set; the dev set is used when empty.
    pub test: Vec<BrowsePage>,
    /// Titles without pages per language, added as copied pairs.
    pub monolingual: BTreeMap<String, Vec<String>>,
    pub tags: TagMap,
    /// Fixed policies instead of computing them from the training pages.
    pub policies: Option<BTreeMap<String, PlaceholderPolicy>>,
    /// Fixed BPE codes instead of learning them.
    pub bpe: Option<BpeModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub seed: u64,
    pub model: ModelConfig,
    pub training: TrainConfig,
    /// Replace frequent slot values by placeholders.
    pub normalize: bool,
    pub top_k: usize,
    /// Learn this many BPE merges on the training pairs.
    pub bpe_merges: Option<usize>,
    pub oversample: bool,
    pub tag_target_language: bool,
    pub max_vocab: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 1,
            model: ModelConfig::desk(),
            training: TrainConfig::default(),
            normalize: true,
            top_k: DEFAULT_TOP_K,
            bpe_merges: None,
            oversample: true,
            tag_target_language: true,
            max_vocab: DEFAULT_MAX_VOCAB,
        }
    }
}

/// One generated title.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTitle {
    pub text: String,
    /// Entities substituted for placeholders, in output order.
    pub entities: Vec<String>,
    /// Some placeholder had no unused source placeholder and stayed literal.
    pub unresolved: bool,
    /// Some placeholder took an entity of a different slot type.
    pub type_fallback: bool,
}

/// Decodes one model input and resolves its placeholders. The encoder
/// output and trace are returned for inspection.
pub fn generate_title<S: AsRef<str>>(
    model: &Seq2Seq<f32>,
    source: &[S],
) -> Result<(GeneratedTitle, EncoderOutput<f32>, DecodeTrace), Seq2SeqError> {
    let (enc, trace) = model.translate(source)?;
    let entity_at = |pos: usize| {
        enc.placeholders
            .iter()
            .find(|p| p.position == pos)
            .map(|p| p.entity.clone())
            .expect("mapping points at a source placeholder")
    };
    let title = match resolve_placeholders(&trace, &enc) {
        Ok(res) => GeneratedTitle {
            text: res.text,
            entities: res.mapping.iter().map(|&(_, pos)| entity_at(pos)).collect(),
            unresolved: false,
            type_fallback: res.type_fallback,
        },
        Err(Seq2SeqError::UnresolvedPlaceholder { partial, mapping, .. }) => GeneratedTitle {
            text: partial,
            entities: mapping.iter().map(|&(_, pos)| entity_at(pos)).collect(),
            unresolved: true,
            type_fallback: false,
        },
        Err(e) => return Err(e),
    };
    Ok((title, enc, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub train_pages: usize,
    pub dev_pages: usize,
    pub eval_pages: usize,
    pub monolingual_sentences: usize,
    /// Normalized slot tags per language.
    pub normalized_slot_types: BTreeMap<String, Vec<String>>,
    pub bpe_merges: usize,
    /// After copy augmentation and oversampling.
    pub training_examples: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_dev_bleu: f64,
    pub stop: StopReason,
    pub dev_bleu_history: Vec<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub titles: usize,
    pub unresolved: usize,
    pub type_fallback: usize,
}

/// Deterministic summary of a run; wall-clock timings are kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub counts: StageCounts,
    pub training: TrainingSummary,
    pub generation: GenerationSummary,
    /// `test` or `dev`.
    pub eval_set: String,
    pub evaluation: EvalReport,
}

pub struct RunOutput {
    pub preprocessor: Preprocessor,
    pub checkpoint: Checkpoint<f32>,
    /// Tagged, oversampled training pairs as fed to the trainer.
    pub train_examples: Vec<ParallelExample>,
    pub dev_examples: Vec<DevExample>,
    pub vocab: Vocabulary,
    pub titles: Vec<GeneratedTitle>,
    pub references: Vec<String>,
    pub report: RunReport,
    /// Seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
}

struct Timer {
    start: Instant,
    out: Vec<(String, f64)>,
}

impl Timer {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.out.push((stage.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

fn languages(pages: &[BrowsePage]) -> BTreeSet<String> {
    pages.iter().map(|p| p.language.clone()).collect()
}

/// Per-language policies from the top-k slot types of each language's training pages.
pub fn compute_policies(
    pages: &[BrowsePage],
    tags: &TagMap,
    k: usize,
) -> Result<BTreeMap<String, PlaceholderPolicy>, PipelineError> {
    let mut out = BTreeMap::new();
    for lang in languages(pages) {
        let own: Vec<BrowsePage> = pages.iter().filter(|p| p.language == lang).cloned().collect();
        let types = compute_top_slot_types(&own, tags, k);
        let policy = PlaceholderPolicy::new(&lang, k, types, PlaceholderMode::InferenceRetained)
            .map_err(|e| PipelineError::stage("normalize", e))?;
        out.insert(lang, policy);
    }
    Ok(out)
}

fn check_pages(pages: &[BrowsePage], set: &str, need_titles: bool) -> Result<(), PipelineError> {
    for (i, page) in pages.iter().enumerate() {
        page.validate()
            .map_err(|e| PipelineError::at_line("lexicalize", i + 1, format!("{set}: {e}")))?;
        if need_titles && page.title.is_none() {
            return Err(PipelineError::at_line("lexicalize", i + 1, format!("{set}: page has no title")));
        }
    }
    Ok(())
}

/// Runs lexicalization, normalization, optional BPE, mixture assembly,
/// training, generation with placeholder resolution and evaluation.
pub fn run(inputs: &RunInputs, settings: &RunSettings) -> Result<RunOutput, PipelineError> {
    if inputs.train.is_empty() || inputs.dev.is_empty() {
        return Err(PipelineError::Validation("train and dev pages must be non-empty".into()));
    }
    settings
        .training
        .validate()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let mut model_config = settings.model.clone();
    model_config.seed = settings.seed;
    model_config
        .validate()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let eval_pages = if inputs.test.is_empty() { &inputs.dev } else { &inputs.test };
    check_pages(&inputs.train, "train", true)?;
    check_pages(&inputs.dev, "dev", true)?;
    check_pages(eval_pages, "eval", true)?;
    let mut timer = Timer {
        start: Instant::now(),
        out: Vec::new(),
    };

    // normalize
    let policies = match (&inputs.policies, settings.normalize) {
        (Some(p), _) => p.clone(),
        (None, true) => compute_policies(&inputs.train, &inputs.tags, settings.top_k)?,
        (None, false) => BTreeMap::new(),
    };
    let mut pre = Preprocessor::new(inputs.tags.clone(), policies, None, settings.tag_target_language);
    let mut raw_pairs = Vec::with_capacity(inputs.train.len());
    for (i, page) in inputs.train.iter().enumerate() {
        raw_pairs.push(pre.training_pair(page).map_err(|e| PipelineError::at_line("normalize", i + 1, e))?);
    }
    timer.lap("normalize");

    // bpe
    let bpe = match (&inputs.bpe, settings.bpe_merges) {
        (Some(b), _) => Some(b.clone()),
        (None, Some(n)) => {
            let mut corpus: Vec<Vec<String>> = Vec::with_capacity(2 * raw_pairs.len());
            for ex in &raw_pairs {
                corpus.push(ex.source.clone());
                corpus.push(ex.target.clone());
            }
            for lines in inputs.monolingual.values() {
                corpus.extend(lines.iter().map(|l| l.split_whitespace().map(String::from).collect()));
            }
            Some(bpe_train(&corpus, n, protected_tokens()))
        }
        (None, None) => None,
    };
    if let Some(bpe) = &bpe {
        pre = Preprocessor::new(pre.tags.clone(), pre.policies.clone(), Some(bpe), settings.tag_target_language);
        raw_pairs = raw_pairs
            .into_iter()
            .map(|ex| ParallelExample {
                source: pre.subwords(ex.source),
                target: pre.subwords(ex.target),
                language: ex.language,
            })
            .collect();
    }
    timer.lap("bpe");

    // prepare
    let mut by_language: BTreeMap<String, Vec<ParallelExample>> = BTreeMap::new();
    for ex in raw_pairs {
        by_language.entry(ex.language.clone()).or_default().push(ex);
    }
    let monolingual: BTreeMap<String, Vec<String>> = inputs
        .monolingual
        .iter()
        .map(|(lang, lines)| (lang.clone(), lines.iter().map(|l| pre.monolingual_line(l)).collect()))
        .collect();
    let mixture = crate::corpusprep::Mixture {
        corpora: by_language.into_values().collect(),
        monolingual,
        oversample: settings.oversample,
        tag_target_language: settings.tag_target_language,
    };
    let train_examples = assemble(&mixture).map_err(|e| PipelineError::stage("prepare", e))?;
    let vocab = build_vocab(&train_examples, settings.max_vocab).map_err(|e| PipelineError::stage("prepare", e))?;
    let mut dev_examples = Vec::with_capacity(inputs.dev.len());
    for (i, page) in inputs.dev.iter().enumerate() {
        let source = pre.source(page).map_err(|e| PipelineError::at_line("prepare", i + 1, e))?;
        dev_examples.push(DevExample {
            source,
            reference: page.title.clone().unwrap_or_default(),
        });
    }
    timer.lap("prepare");
    info!(
        "{} training examples, vocabulary of {} tokens",
        train_examples.len(),
        vocab.len()
    );

    // train
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let model = Seq2Seq::<f32>::new(model_config, vocab.clone(), &mut rng).map_err(|e| PipelineError::stage("train", e))?;
    let outcome = train(model, &train_examples, &dev_examples, &settings.training, &mut rng)
        .map_err(|e| PipelineError::stage("train", e))?;
    timer.lap("train");

    // generate + resolve
    let mut titles = Vec::with_capacity(eval_pages.len());
    for (i, page) in eval_pages.iter().enumerate() {
        let source = pre.source(page).map_err(|e| PipelineError::at_line("generate", i + 1, e))?;
        let (title, _, _) = generate_title(&outcome.model, &source).map_err(|e| PipelineError::at_line("generate", i + 1, e))?;
        titles.push(title);
    }
    timer.lap("generate");

    // evaluate
    let references: Vec<String> = eval_pages.iter().map(|p| p.title.clone().unwrap_or_default()).collect();
    let hyps: Vec<&str> = titles.iter().map(|t| t.text.as_str()).collect();
    let evaluation = evaluate(&hyps, &references).map_err(|e| PipelineError::stage("evaluate", e))?;
    timer.lap("evaluate");

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        seed: settings.seed,
        counts: StageCounts {
            train_pages: inputs.train.len(),
            dev_pages: inputs.dev.len(),
            eval_pages: eval_pages.len(),
            monolingual_sentences: inputs.monolingual.values().map(Vec::len).sum(),
            normalized_slot_types: pre
                .policies
                .iter()
                .map(|(l, p)| (l.clone(), p.normalized_slot_types.iter().cloned().collect()))
                .collect(),
            bpe_merges: bpe.as_ref().map_or(0, |b| b.merges().len()),
            training_examples: train_examples.len(),
            vocab_size: vocab.len(),
        },
        training: TrainingSummary {
            epochs: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            best_dev_bleu: outcome.best_bleu,
            stop: outcome.stop,
            dev_bleu_history: outcome.dev_bleu_history(),
            final_loss: outcome.history.last().map_or(0.0, |r| r.loss),
        },
        generation: GenerationSummary {
            titles: titles.len(),
            unresolved: titles.iter().filter(|t| t.unresolved).count(),
            type_fallback: titles.iter().filter(|t| t.type_fallback).count(),
        },
        eval_set: if inputs.test.is_empty() { "dev" } else { "test" }.to_string(),
        evaluation,
    };
    let checkpoint = Checkpoint {
        epoch: outcome.best_epoch,
        dev_bleu_history: outcome.dev_bleu_history(),
        preprocess: Some(pre.to_json()),
        model: outcome.model,
    };
    Ok(RunOutput {
        preprocessor: pre,
        checkpoint,
        train_examples,
        dev_examples,
        vocab,
        titles,
        references,
        report,
        timings: timer.out,
    })
}

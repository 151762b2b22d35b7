use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpusprep::{write_parallel_tsv, DEFAULT_MAX_VOCAB};
use crate::lexicon::{read_pages_jsonl, BrowsePage, PlaceholderPolicy, TagMap, DEFAULT_TOP_K};
use crate::seq2seq::{ModelConfig, TrainConfig};
use crate::subword::BpeModel;

use super::{run, PipelineError, RunInputs, RunOutput, RunReport, RunSettings};

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides the configured seed when set.
pub const SEED_ENV: &str = "SLOTGEN_SEED";

/// A pipeline run as read from JSON. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// `desk` or `paper`.
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Languages to keep; pages in other languages are dropped. Empty keeps all.
    #[serde(default)]
    pub languages: Vec<String>,
    pub train: Vec<PathBuf>,
    pub dev: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    pub tags: Option<PathBuf>,
    /// Precomputed policy files per language; computed from the training pages otherwise.
    #[serde(default)]
    pub policies: BTreeMap<String, PathBuf>,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    pub bpe_merges: Option<usize>,
    pub bpe_codes: Option<PathBuf>,
    /// Monolingual title files per language for copy augmentation.
    #[serde(default)]
    pub monolingual: BTreeMap<String, PathBuf>,
    #[serde(default = "default_true")]
    pub oversample: bool,
    #[serde(default = "default_true")]
    pub tag_target_language: bool,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
    /// Fields overriding the preset's model configuration.
    #[serde(default)]
    pub model: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub training: TrainConfig,
    pub out_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

fn default_preset() -> String {
    "desk".into()
}

fn default_true() -> bool {
    true
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_max_vocab() -> usize {
    DEFAULT_MAX_VOCAB
}

/// A preset with individual fields overridden and the run seed applied.
pub fn model_config_from(
    preset: &str,
    overrides: &serde_json::Map<String, serde_json::Value>,
    seed: u64,
) -> Result<ModelConfig, PipelineError> {
    let base = ModelConfig::preset(preset).ok_or_else(|| invalid(format!("unknown preset `{preset}`")))?;
    let mut value = serde_json::to_value(base).expect("config serializes");
    let obj = value.as_object_mut().expect("config is an object");
    for (k, v) in overrides {
        if !obj.contains_key(k) {
            return Err(invalid(format!("unknown model field `{k}`")));
        }
        obj.insert(k.clone(), v.clone());
    }
    let mut cfg: ModelConfig = serde_json::from_value(value).map_err(invalid)?;
    cfg.seed = seed;
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn invalid(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(msg.to_string())
}

impl RunConfig {
    /// Parses the file and applies the seed override; paths are made absolute.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}=`{seed}` is not an unsigned integer")))?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.train.iter_mut().for_each(fix);
        self.dev.iter_mut().for_each(fix);
        self.test.iter_mut().for_each(fix);
        self.tags.iter_mut().for_each(fix);
        self.bpe_codes.iter_mut().for_each(fix);
        self.policies.values_mut().for_each(fix);
        self.monolingual.values_mut().for_each(fix);
        fix(&mut self.out_dir);
    }

    pub fn model_config(&self) -> Result<ModelConfig, PipelineError> {
        model_config_from(&self.preset, &self.model, self.seed)
    }

    pub fn settings(&self) -> Result<RunSettings, PipelineError> {
        Ok(RunSettings {
            seed: self.seed,
            model: self.model_config()?,
            training: self.training.clone(),
            normalize: self.normalize,
            top_k: self.top_k,
            bpe_merges: self.bpe_merges,
            oversample: self.oversample,
            tag_target_language: self.tag_target_language,
            max_vocab: self.max_vocab,
        })
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.train.is_empty() || self.dev.is_empty() {
            return Err(invalid("at least one train and one dev file is required"));
        }
        if self.bpe_merges.is_some() && self.bpe_codes.is_some() {
            return Err(invalid("bpe_merges and bpe_codes are mutually exclusive"));
        }
        if self.bpe_merges == Some(0) {
            return Err(invalid("bpe_merges must be positive"));
        }
        if self.top_k == 0 {
            return Err(invalid("top_k must be positive"));
        }
        self.training.validate().map_err(invalid)?;
        self.model_config()?;
        let inputs = self
            .train
            .iter()
            .chain(&self.dev)
            .chain(&self.test)
            .chain(&self.tags)
            .chain(&self.bpe_codes)
            .chain(self.policies.values())
            .chain(self.monolingual.values());
        for path in inputs {
            if !path.is_file() {
                return Err(invalid(format!("input file {} does not exist", path.display())));
            }
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return Err(invalid(format!("{} exists and is not a directory", self.out_dir.display())));
        }
        Ok(())
    }

    fn read_pages(&self, paths: &[PathBuf]) -> Result<Vec<BrowsePage>, PipelineError> {
        let mut pages = Vec::new();
        for path in paths {
            let file = File::open(path).map_err(|e| PipelineError::stage("lexicalize", format!("{}: {e}", path.display())))?;
            let read = read_pages_jsonl(BufReader::new(file)).map_err(|e| match e {
                crate::lexicon::LexiconError::Parse { line, message } => {
                    PipelineError::at_line("lexicalize", line, format!("{}: {message}", path.display()))
                }
                other => PipelineError::stage("lexicalize", format!("{}: {other}", path.display())),
            })?;
            pages.extend(
                read.into_iter()
                    .filter(|p| self.languages.is_empty() || self.languages.contains(&p.language)),
            );
        }
        Ok(pages)
    }

    /// Loads every input file.
    pub fn inputs(&self) -> Result<RunInputs, PipelineError> {
        let tags = match &self.tags {
            Some(p) => TagMap::load(p).map_err(|e| PipelineError::stage("lexicalize", format!("{}: {e}", p.display())))?,
            None => TagMap::new(),
        };
        let policies = if self.policies.is_empty() {
            None
        } else {
            let mut out = BTreeMap::new();
            for (lang, p) in &self.policies {
                let policy = PlaceholderPolicy::load(p)
                    .map_err(|e| PipelineError::stage("normalize", format!("{}: {e}", p.display())))?;
                out.insert(lang.clone(), policy);
            }
            Some(out)
        };
        let bpe = match &self.bpe_codes {
            Some(p) => Some(BpeModel::load(p).map_err(|e| PipelineError::stage("bpe", format!("{}: {e}", p.display())))?),
            None => None,
        };
        let mut monolingual = BTreeMap::new();
        for (lang, p) in &self.monolingual {
            let text = fs::read_to_string(p).map_err(|e| PipelineError::stage("prepare", format!("{}: {e}", p.display())))?;
            monolingual.insert(
                lang.clone(),
                text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect(),
            );
        }
        Ok(RunInputs {
            train: self.read_pages(&self.train)?,
            dev: self.read_pages(&self.dev)?,
            test: self.read_pages(&self.test)?,
            monolingual,
            tags,
            policies,
            bpe,
        })
    }
}

/// Paths written by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: RunReport,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write_file(dir: &Path, name: &str, files: &mut Vec<PathBuf>, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| PipelineError::stage("write", format!("{}: {e}", path.display())))?);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| PipelineError::stage("write", format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(())
}

fn write_artifacts(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::stage("write", format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    write_file(dir, "train.tsv", &mut files, |w| write_parallel_tsv(w, &out.train_examples))?;
    write_file(dir, "dev.tsv", &mut files, |w| {
        for d in &out.dev_examples {
            writeln!(w, "{}\t{}", d.source.join(" "), d.reference)?;
        }
        Ok(())
    })?;
    write_file(dir, "vocab.tsv", &mut files, |w| out.vocab.write_tsv(w))?;
    if let Some(bpe) = out.preprocessor.bpe() {
        write_file(dir, "codes.bpe", &mut files, |w| bpe.write_codes(w))?;
    }
    write_file(dir, "policies.json", &mut files, |w| {
        serde_json::to_writer_pretty(&mut *w, &out.preprocessor.policies)?;
        writeln!(w)
    })?;
    write_file(dir, "preprocess.json", &mut files, |w| {
        serde_json::to_writer_pretty(&mut *w, &out.preprocessor.to_json())?;
        writeln!(w)
    })?;
    let path = dir.join("model.ckpt");
    out.checkpoint
        .save(&path)
        .map_err(|e| PipelineError::stage("write", format!("{}: {e}", path.display())))?;
    files.push(path);
    write_file(dir, "titles.txt", &mut files, |w| {
        for t in &out.titles {
            writeln!(w, "{}", t.text)?;
        }
        Ok(())
    })?;
    write_file(dir, "report.json", &mut files, |w| {
        serde_json::to_writer_pretty(&mut *w, &out.report)?;
        writeln!(w)
    })?;
    write_file(dir, "timings.json", &mut files, |w| {
        let map: serde_json::Map<String, serde_json::Value> =
            out.timings.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        serde_json::to_writer_pretty(&mut *w, &map)?;
        writeln!(w)
    })?;
    Ok(files)
}

/// Validates the configuration, runs every stage and writes the artifacts.
pub fn run_pipeline(config_path: &Path) -> Result<PipelineOutput, PipelineError> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    let settings = cfg.settings()?;
    let inputs = cfg.inputs()?;
    let out = run(&inputs, &settings)?;
    let files = write_artifacts(&out, &cfg.out_dir)?;
    Ok(PipelineOutput {
        report: out.report,
        out_dir: cfg.out_dir,
        files,
    })
}

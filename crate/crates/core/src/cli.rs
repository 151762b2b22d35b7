//! The `slotgen` command line. Every pipeline stage is available as a
//! subcommand with file inputs and outputs.
//!
//! Exit codes: 0 on success, 2 for invalid arguments, configuration or
//! missing inputs, 3 when a stage fails.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpusprep::{
    assemble, build_vocab, load_parallel_tsv, write_parallel_tsv, MixtureSpec, Vocabulary, DEFAULT_MAX_VOCAB,
};
use crate::lexicon::{
    compute_top_slot_types, lexicalize, normalize, normalize_title, read_pages_jsonl, write_pages_jsonl,
    PlaceholderMode, PlaceholderPolicy, PseudoSequence, TagMap, DEFAULT_TOP_K,
};
use crate::lmfilter::{filter_corpus, tokenize, NGramLm, DEFAULT_MIN_LEN, DEFAULT_ORDER, DEFAULT_TOP_K as LM_TOP_K};
use crate::metrics::evaluate;
use crate::pipeline::synth::{make_synthetic_corpus, SynthSpec};
use crate::pipeline::{generate_title, model_config_from, run_pipeline, PipelineError, Preprocessor, SEED_ENV};
use crate::seq2seq::{train, Checkpoint, DevExample, Seq2Seq, TrainConfig};
use crate::subword::{bpe_decode, bpe_train, BpeModel, Protected};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or missing inputs.
    Usage(String),
    /// A stage failed while running.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Validation(_) => CliError::Usage(e.to_string()),
            PipelineError::Stage { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "slotgen", version, about = "Generate browse-page titles from slot/value pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Train,
    Infer,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn JSONL browse pages into pseudo-language lines.
    Lexicalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the gold titles, line-aligned.
        #[arg(long)]
        titles_out: Option<PathBuf>,
    },
    /// Replace slot values by placeholders in pseudo-language lines.
    Normalize {
        /// Policy JSON; computed from `--pages` when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "infer")]
        mode: ModeArg,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gold titles aligned with the input; rewritten with placeholders.
        #[arg(long, requires = "titles_out")]
        titles: Option<PathBuf>,
        #[arg(long)]
        titles_out: Option<PathBuf>,
        /// Pages to compute a policy from.
        #[arg(long, conflicts_with = "policy")]
        pages: Option<PathBuf>,
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        /// Language of the computed policy.
        #[arg(long)]
        language: Option<String>,
        /// Write the computed policy here.
        #[arg(long)]
        save_policy: Option<PathBuf>,
    },
    /// Learn BPE merges from whitespace-tokenized text.
    BpeTrain {
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = crate::subword::DEFAULT_MERGES)]
        merges: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split text into subwords, or join subwords with `--decode`.
    BpeApply {
        #[arg(long)]
        codes: Option<PathBuf>,
        #[arg(long)]
        decode: bool,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select the lowest-perplexity sentences under an n-gram title LM.
    FilterCorpus {
        #[arg(long)]
        lm_train: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
        min_len: usize,
        #[arg(long, default_value_t = LM_TOP_K)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Assemble a training mixture and its vocabulary.
    Prepare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Train a model on prepared pairs.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// `source<TAB>reference` lines; sources as fed to the model.
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Preprocessing state to store in the checkpoint.
        #[arg(long)]
        preprocess: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate titles with a checkpoint.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        /// JSONL pages, preprocessed with the checkpoint's stored state.
        #[arg(long, conflicts_with = "sources")]
        input: Option<PathBuf>,
        /// Model inputs, one per line, already preprocessed.
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-title attention matrices as JSON lines.
        #[arg(long)]
        dump_attention: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Score hypotheses against references with BLEU, chrF1 and TER.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        r#ref: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic multilingual corpus and a pipeline config for it.
    Synth {
        /// `high-low` (en 2000 / fr 100) or `smoke` (en 200).
        #[arg(long, default_value = "smoke")]
        preset: String,
        /// Sizes as JSON instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage from a JSON run config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("slotgen: {e}");
            e.exit_code()
        }
    }
}

fn need(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

fn need_opt(path: &Option<PathBuf>) -> CliResult {
    path.as_deref().map_or(Ok(()), need)
}

fn read_text(path: Option<&Path>) -> Result<String, CliError> {
    let mut text = String::new();
    match path {
        Some(p) => {
            text = fs::read_to_string(p).map_err(|e| runtime(p.display(), e))?;
        }
        None => {
            io::stdin().read_to_string(&mut text).map_err(|e| runtime("stdin", e))?;
        }
    }
    Ok(text)
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| runtime(dir.display(), e))?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| runtime(p.display(), e))?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_lines<S: AsRef<str>>(path: Option<&Path>, lines: &[S]) -> CliResult {
    let name = path.map_or("stdout".to_string(), |p| p.display().to_string());
    let mut w = writer(path)?;
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| runtime(&name, e))?;
    }
    w.flush().map_err(|e| runtime(&name, e))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult {
    let body = serde_json::to_string_pretty(value).expect("value serializes");
    write_lines(path, &[body])
}

fn load_pages(path: &Path) -> Result<Vec<crate::lexicon::BrowsePage>, CliError> {
    let file = File::open(path).map_err(|e| runtime(path.display(), e))?;
    read_pages_jsonl(BufReader::new(file)).map_err(|e| runtime(path.display(), e))
}

fn load_tags(path: &Option<PathBuf>) -> Result<TagMap, CliError> {
    match path {
        Some(p) => TagMap::load(p).map_err(|e| runtime(p.display(), e)),
        None => Ok(TagMap::new()),
    }
}

/// Model and training settings for `train`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub model: serde_json::Map<String, serde_json::Value>,
    pub training: TrainConfig,
    pub max_vocab: Option<usize>,
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Lexicalize {
            input,
            tags,
            out,
            titles_out,
        } => {
            need(&input)?;
            need_opt(&tags)?;
            let tags = load_tags(&tags)?;
            let pages = load_pages(&input)?;
            let mut lines = Vec::with_capacity(pages.len());
            for (i, page) in pages.iter().enumerate() {
                let seq = lexicalize(page, &tags)
                    .map_err(|e| runtime(format!("lexicalize: {} line {}", input.display(), i + 1), e))?;
                lines.push(seq.to_string());
            }
            write_lines(out.as_deref(), &lines)?;
            if let Some(path) = titles_out {
                let titles: Vec<String> = pages.iter().map(|p| p.title.clone().unwrap_or_default()).collect();
                write_lines(Some(&path), &titles)?;
            }
            Ok(())
        }
        Command::Normalize {
            policy,
            mode,
            input,
            out,
            titles,
            titles_out,
            pages,
            tags,
            top_k,
            language,
            save_policy,
        } => {
            need_opt(&policy)?;
            need_opt(&input)?;
            need_opt(&titles)?;
            need_opt(&pages)?;
            need_opt(&tags)?;
            let mut policy = match (policy, pages) {
                (Some(p), _) => PlaceholderPolicy::load(&p).map_err(|e| runtime(p.display(), e))?,
                (None, Some(pages)) => {
                    let language = language.ok_or_else(|| usage("--language is required with --pages"))?;
                    let all = load_pages(&pages)?;
                    let own: Vec<_> = all.into_iter().filter(|p| p.language == language).collect();
                    let types = compute_top_slot_types(&own, &load_tags(&tags)?, top_k);
                    PlaceholderPolicy::new(&language, top_k, types, PlaceholderMode::InferenceRetained)
                        .map_err(|e| runtime("normalize", e))?
                }
                (None, None) => return Err(usage("either --policy or --pages is required")),
            };
            if let Some(path) = save_policy {
                write_json(Some(&path), &policy)?;
            }
            policy.mode = match mode {
                ModeArg::Train => PlaceholderMode::TrainStripped,
                ModeArg::Infer => PlaceholderMode::InferenceRetained,
            };
            let retained = policy.with_mode(PlaceholderMode::InferenceRetained);
            let text = read_text(input.as_deref())?;
            let seqs: Vec<PseudoSequence> = text
                .lines()
                .map(|l| PseudoSequence::parse(l, &policy.language))
                .collect();
            let lines: Vec<String> = seqs.iter().map(|s| normalize(s, &policy).to_string()).collect();
            write_lines(out.as_deref(), &lines)?;
            if let (Some(titles), Some(titles_out)) = (titles, titles_out) {
                let gold = read_text(Some(&titles))?;
                let gold: Vec<&str> = gold.lines().collect();
                if gold.len() != seqs.len() {
                    return Err(runtime(
                        "normalize",
                        format!("{} titles for {} sequences", gold.len(), seqs.len()),
                    ));
                }
                let rewritten: Vec<String> = seqs
                    .iter()
                    .zip(gold)
                    .map(|(s, t)| normalize_title(t, &normalize(s, &retained).entities()).join(" "))
                    .collect();
                write_lines(Some(&titles_out), &rewritten)?;
            }
            Ok(())
        }
        Command::BpeTrain { input, merges, out } => {
            if input.is_empty() {
                return Err(usage("at least one --input is required"));
            }
            if merges == 0 {
                return Err(usage("--merges must be positive"));
            }
            for p in &input {
                need(p)?;
            }
            let mut corpus = Vec::new();
            for p in &input {
                let text = read_text(Some(p))?;
                corpus.extend(text.lines().map(|l| tokenize(l).into_iter().map(String::from).collect::<Vec<_>>()));
            }
            let model = bpe_train(&corpus, merges, Protected::defaults());
            let mut w = writer(Some(&out))?;
            model
                .write_codes(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| runtime(out.display(), e))
        }
        Command::BpeApply {
            codes,
            decode,
            input,
            out,
        } => {
            need_opt(&codes)?;
            need_opt(&input)?;
            let text = read_text(input.as_deref())?;
            let lines: Vec<String> = if decode {
                let mut v = Vec::new();
                for (i, l) in text.lines().enumerate() {
                    let tokens: Vec<&str> = tokenize(l);
                    let joined = bpe_decode(&tokens).map_err(|e| runtime(format!("bpe-apply: line {}", i + 1), e))?;
                    v.push(joined.join(" "));
                }
                v
            } else {
                let codes = codes.ok_or_else(|| usage("--codes is required unless --decode is given"))?;
                let model = BpeModel::load(&codes).map_err(|e| runtime(codes.display(), e))?;
                text.lines().map(|l| model.encode(&tokenize(l)).join(" ")).collect()
            };
            write_lines(out.as_deref(), &lines)
        }
        Command::FilterCorpus {
            lm_train,
            order,
            input,
            min_len,
            top_k,
            out,
            report,
        } => {
            need(&lm_train)?;
            need(&input)?;
            let titles_text = read_text(Some(&lm_train))?;
            let titles: Vec<Vec<&str>> = titles_text.lines().map(tokenize).collect();
            let lm = NGramLm::train(&titles, order).map_err(|e| usage(format!("filter-corpus: {e}")))?;
            let corpus_text = read_text(Some(&input))?;
            let corpus: Vec<&str> = corpus_text.lines().collect();
            let (selected, stats) = filter_corpus(&lm, &corpus, min_len, top_k);
            let lines: Vec<&str> = selected.iter().map(|s| s.text.as_str()).collect();
            write_lines(out.as_deref(), &lines)?;
            if let Some(path) = report {
                write_json(Some(&path), &stats)?;
            }
            Ok(())
        }
        Command::Prepare { spec, out, vocab } => {
            need(&spec)?;
            let mixture_spec = MixtureSpec::load(&spec).map_err(|e| usage(e.to_string()))?;
            let base = spec.parent().unwrap_or(Path::new("."));
            let mixture = mixture_spec.materialize(base).map_err(|e| runtime("prepare", e))?;
            let examples = assemble(&mixture).map_err(|e| runtime("prepare", e))?;
            let v = build_vocab(&examples, mixture_spec.max_vocab).map_err(|e| runtime("prepare", e))?;
            let mut w = writer(Some(&out))?;
            write_parallel_tsv(&mut w, &examples)
                .and_then(|_| w.flush())
                .map_err(|e| runtime(out.display(), e))?;
            let mut w = writer(Some(&vocab))?;
            v.write_tsv(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| runtime(vocab.display(), e))
        }
        Command::Train {
            train: train_path,
            dev,
            config,
            vocab,
            preprocess,
            out,
        } => {
            need(&train_path)?;
            need(&dev)?;
            need_opt(&config)?;
            need_opt(&vocab)?;
            need_opt(&preprocess)?;
            let file: TrainFile = match &config {
                Some(p) => serde_json::from_str(&read_text(Some(p))?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => TrainFile::default(),
            };
            let seed = match std::env::var(SEED_ENV) {
                Ok(s) => s.trim().parse().map_err(|_| usage(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?,
                Err(_) => file.seed.unwrap_or(1),
            };
            let model_config = model_config_from(file.preset.as_deref().unwrap_or("desk"), &file.model, seed)?;
            file.training.validate().map_err(|e| usage(e.to_string()))?;
            let pre = match &preprocess {
                Some(p) => {
                    let value: serde_json::Value =
                        serde_json::from_str(&read_text(Some(p))?).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    Preprocessor::from_json(&value).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    Some(value)
                }
                None => None,
            };
            let examples = load_parallel_tsv(&train_path).map_err(|e| runtime("train", e))?;
            let dev_examples = read_dev_tsv(&dev)?;
            let v = match &vocab {
                Some(p) => {
                    let f = File::open(p).map_err(|e| runtime(p.display(), e))?;
                    Vocabulary::read_tsv(BufReader::new(f)).map_err(|e| runtime(p.display(), e))?
                }
                None => build_vocab(&examples, file.max_vocab.unwrap_or(DEFAULT_MAX_VOCAB)).map_err(|e| runtime("train", e))?,
            };
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let model = Seq2Seq::<f32>::new(model_config, v, &mut rng).map_err(|e| runtime("train", e))?;
            let outcome = train(model, &examples, &dev_examples, &file.training, &mut rng).map_err(|e| runtime("train", e))?;
            fs::create_dir_all(&out).map_err(|e| runtime(out.display(), e))?;
            let ckpt = Checkpoint {
                epoch: outcome.best_epoch,
                dev_bleu_history: outcome.dev_bleu_history(),
                preprocess: pre,
                model: outcome.model.clone(),
            };
            let ckpt_path = out.join("model.ckpt");
            ckpt.save(&ckpt_path).map_err(|e| runtime(ckpt_path.display(), e))?;
            write_json(Some(&out.join("history.json")), &outcome.history)
        }
        Command::Generate {
            ckpt,
            input,
            sources,
            out,
            dump_attention,
            beam,
            max_len,
        } => {
            need(&ckpt)?;
            need_opt(&input)?;
            need_opt(&sources)?;
            let mut checkpoint = Checkpoint::<f32>::load(&ckpt).map_err(|e| runtime(ckpt.display(), e))?;
            if let Some(b) = beam {
                checkpoint.model.config.beam_size = b;
            }
            if let Some(m) = max_len {
                checkpoint.model.config.max_target_len = m;
            }
            checkpoint.model.config.validate().map_err(|e| usage(e.to_string()))?;
            let model_inputs: Vec<Vec<String>> = match (input, sources) {
                (Some(pages_path), None) => {
                    let value = checkpoint.preprocess.as_ref().ok_or_else(|| {
                        runtime("generate", "checkpoint stores no preprocessing state; pass --sources")
                    })?;
                    let pre = Preprocessor::from_json(value).map_err(|e| runtime("generate", e))?;
                    let pages = load_pages(&pages_path)?;
                    let mut v = Vec::with_capacity(pages.len());
                    for (i, page) in pages.iter().enumerate() {
                        v.push(pre.source(page).map_err(|e| runtime(format!("generate: line {}", i + 1), e))?);
                    }
                    v
                }
                (None, Some(p)) => read_text(Some(&p))?
                    .lines()
                    .map(|l| l.split_whitespace().map(String::from).collect())
                    .collect(),
                _ => return Err(usage("exactly one of --input or --sources is required")),
            };
            let mut titles = Vec::with_capacity(model_inputs.len());
            let mut dump = match &dump_attention {
                Some(p) => Some(writer(Some(p))?),
                None => None,
            };
            for (i, src) in model_inputs.iter().enumerate() {
                let (title, enc, trace) =
                    generate_title(&checkpoint.model, src).map_err(|e| runtime(format!("generate: line {}", i + 1), e))?;
                if title.unresolved {
                    log::warn!("line {}: unresolved placeholder in `{}`", i + 1, title.text);
                }
                if let Some(w) = dump.as_mut() {
                    let record = AttentionRecord {
                        line: i + 1,
                        source: &enc.tokens,
                        output: &trace.tokens,
                        attention: &trace.attention,
                        title: &title.text,
                        unresolved: title.unresolved,
                        type_fallback: title.type_fallback,
                    };
                    let json = serde_json::to_string(&record).expect("record serializes");
                    writeln!(w, "{json}").map_err(|e| runtime("attention dump", e))?;
                }
                titles.push(title.text);
            }
            if let Some(mut w) = dump {
                w.flush().map_err(|e| runtime("attention dump", e))?;
            }
            write_lines(out.as_deref(), &titles)
        }
        Command::Evaluate { hyp, r#ref, out } => {
            need(&hyp)?;
            need(&r#ref)?;
            let h = read_text(Some(&hyp))?;
            let r = read_text(Some(&r#ref))?;
            let hyps: Vec<&str> = h.lines().collect();
            let refs: Vec<&str> = r.lines().collect();
            let report = evaluate(&hyps, &refs).map_err(|e| runtime("evaluate", e))?;
            write_json(out.as_deref(), &report)
        }
        Command::Synth {
            preset,
            spec,
            seed,
            out,
        } => {
            need_opt(&spec)?;
            let spec = match spec {
                Some(p) => serde_json::from_str(&read_text(Some(&p))?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => synth_preset(&preset).ok_or_else(|| usage(format!("unknown synth preset `{preset}`")))?,
            };
            write_synthetic(&spec, seed, &out)
        }
        Command::Pipeline { config } => {
            let output = run_pipeline(&config)?;
            let e = &output.report.evaluation;
            println!(
                "{} set: BLEU {:.2}  chrF1 {:.2}  TER {:.2}  ({} titles, {} unresolved); artifacts in {}",
                output.report.eval_set,
                e.bleu,
                e.chrf1,
                e.ter,
                output.report.generation.titles,
                output.report.generation.unresolved,
                output.out_dir.display()
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AttentionRecord<'a> {
    line: usize,
    source: &'a [String],
    output: &'a [String],
    attention: &'a [Vec<f64>],
    title: &'a str,
    unresolved: bool,
    type_fallback: bool,
}

/// `source<TAB>reference` lines; a third language column is ignored.
pub fn read_dev_tsv(path: &Path) -> Result<Vec<DevExample>, CliError> {
    let file = File::open(path).map_err(|e| runtime(path.display(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| runtime(path.display(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next()) {
            (Some(src), Some(reference)) if !src.trim().is_empty() => out.push(DevExample {
                source: src.split_whitespace().map(String::from).collect(),
                reference: reference.to_string(),
            }),
            _ => {
                return Err(runtime(
                    format!("{} line {}", path.display(), i + 1),
                    "expected `source<TAB>reference`",
                ))
            }
        }
    }
    Ok(out)
}

pub fn synth_preset(name: &str) -> Option<SynthSpec> {
    match name {
        "high-low" => Some(SynthSpec::high_low("en", "fr", 100)),
        "smoke" => {
            let mut spec = SynthSpec::single("en", 200, 50);
            spec.test.insert("en".into(), 50);
            Some(spec)
        }
        _ => None,
    }
}

/// Writes `{train,dev,test}.<lang>.jsonl`, `mono.<lang>.txt`, `tags.tsv` and
/// a `run.json` pipeline config over them.
pub fn write_synthetic(spec: &SynthSpec, seed: u64, out: &Path) -> CliResult {
    let corpus = make_synthetic_corpus(spec, seed).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| runtime(out.display(), e))?;
    let mut files: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (split, sets) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        for (lang, pages) in sets {
            if pages.is_empty() {
                continue;
            }
            let name = format!("{split}.{lang}.jsonl");
            let mut w = writer(Some(&out.join(&name)))?;
            write_pages_jsonl(&mut w, pages)
                .and_then(|_| w.flush())
                .map_err(|e| runtime(&name, e))?;
            files.entry(split).or_default().push(name);
        }
    }
    let mut monolingual = serde_json::Map::new();
    for (lang, lines) in &corpus.monolingual {
        if lines.is_empty() {
            continue;
        }
        let name = format!("mono.{lang}.txt");
        write_lines(Some(&out.join(&name)), lines)?;
        monolingual.insert(lang.clone(), serde_json::json!(name));
    }
    let mut w = writer(Some(&out.join("tags.tsv")))?;
    corpus
        .tags
        .write_tsv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| runtime("tags.tsv", e))?;
    let mut config = serde_json::json!({
        "schema_version": crate::pipeline::SCHEMA_VERSION,
        "seed": seed,
        "preset": "desk",
        "train": files.get("train").cloned().unwrap_or_default(),
        "dev": files.get("dev").cloned().unwrap_or_default(),
        "test": files.get("test").cloned().unwrap_or_default(),
        "tags": "tags.tsv",
        "monolingual": monolingual,
        "training": {"max_epochs": 60, "adam": {"lr": 0.005}},
        "out_dir": "run",
    });
    if files.get("dev").is_none() {
        config["dev"] = config["train"].clone();
    }
    write_json(Some(&out.join("run.json")), &config)
}

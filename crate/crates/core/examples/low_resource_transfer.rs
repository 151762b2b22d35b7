//! Low-resource French with and without English data and copied French titles.
//!
//! Usage: `cargo run --release --example low_resource_transfer [seed] [max_epochs] [min_epochs]`

use std::collections::BTreeMap;
use std::time::Instant;

use slotgen::pipeline::synth::{make_synthetic_corpus, SynthSpec};
use slotgen::pipeline::{run, RunInputs, RunSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let max_epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let min_epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let corpus = make_synthetic_corpus(&SynthSpec::high_low("en", "fr", 100), seed)?;
    let mut settings = RunSettings {
        seed,
        normalize: false,
        ..RunSettings::default()
    };
    settings.training.max_epochs = max_epochs;
    settings.training.min_epochs = min_epochs;
    settings.training.adam.lr = 5e-3;

    let fr_train = corpus.train["fr"].clone();
    let conditions = [
        ("fr only", fr_train.clone(), BTreeMap::new()),
        ("en + fr, oversampled", corpus.all_train(), BTreeMap::new()),
        ("fr + copied fr titles", fr_train, corpus.monolingual.clone()),
    ];
    for (name, train, monolingual) in conditions {
        let inputs = RunInputs {
            train,
            dev: corpus.dev["fr"].clone(),
            monolingual,
            tags: corpus.tags.clone(),
            ..RunInputs::default()
        };
        let start = Instant::now();
        let out = run(&inputs, &settings)?;
        println!(
            "{name:<24} dev BLEU {:6.2}  chrF1 {:6.2}  TER {:6.2}  ({} examples, {} epochs, {:.0}s)",
            out.report.evaluation.bleu,
            out.report.evaluation.chrf1,
            out.report.evaluation.ter,
            out.report.counts.training_examples,
            out.report.training.epochs,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

//! Trains the desk model until it reproduces its own 100 training titles.
//!
//! Usage: `cargo run --release --example memorize [seed]`

use slotgen::pipeline::synth::{make_synthetic_corpus, SynthSpec};
use slotgen::pipeline::{run, RunInputs, RunSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let corpus = make_synthetic_corpus(&SynthSpec::single("en", 100, 0), seed)?;
    let pages = corpus.all_train();
    let inputs = RunInputs {
        train: pages.clone(),
        dev: pages,
        tags: corpus.tags,
        ..RunInputs::default()
    };
    let mut settings = RunSettings {
        seed,
        ..RunSettings::default()
    };
    settings.training.max_epochs = 300;
    settings.training.min_epochs = 300;
    settings.training.stop_at_bleu = Some(100.0);
    settings.training.adam.lr = 5e-3;
    settings.training.batch_size = 16;
    let out = run(&inputs, &settings)?;
    let r = &out.report;
    println!(
        "train-set BLEU {:.2}  TER {:.2}  after {} epochs ({:?})",
        r.evaluation.bleu, r.evaluation.ter, r.training.epochs, r.training.stop
    );
    for (hyp, reference) in out.titles.iter().zip(&out.references).filter(|(h, r)| h.text != **r) {
        println!("mismatch:");
        println!("  {}\n  {}\n", hyp.text, reference);
    }
    Ok(())
}

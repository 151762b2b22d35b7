//! Trains a small model on synthetic English pages, then generates titles
//! for unseen pages and shows where each placeholder got its entity.
//!
//! cargo run --release --example train_and_generate [epochs]

use std::collections::BTreeMap;

use slotgen::pipeline::synth::{make_synthetic_corpus, SynthSpec};
use slotgen::pipeline::{generate_title, run, RunInputs, RunSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let spec = SynthSpec {
        train: BTreeMap::from([("en".to_string(), 600)]),
        dev: BTreeMap::from([("en".to_string(), 60)]),
        test: BTreeMap::from([("en".to_string(), 5)]),
        ..SynthSpec::default()
    };
    let corpus = make_synthetic_corpus(&spec, 2)?;
    let inputs = RunInputs {
        train: corpus.all_train(),
        dev: corpus.all_dev(),
        test: corpus.all_test(),
        tags: corpus.tags.clone(),
        ..RunInputs::default()
    };
    let mut settings = RunSettings::default();
    settings.training.max_epochs = epochs;
    settings.training.adam.lr = 5e-3;
    let out = run(&inputs, &settings)?;
    println!(
        "best dev BLEU {:.2} at epoch {} ({:?})\n",
        out.report.training.best_dev_bleu, out.report.training.best_epoch, out.report.training.stop
    );

    for page in corpus.all_test() {
        let source = out.preprocessor.source(&page)?;
        let (title, enc, trace) = generate_title(&out.checkpoint.model, &source)?;
        println!("source     {}", source.join(" "));
        println!("decoded    {}", trace.content_tokens().join(" "));
        println!("title      {}", title.text);
        println!("reference  {}", page.title.as_deref().unwrap_or_default());
        for (j, tok) in trace.content_tokens().iter().enumerate() {
            if !tok.starts_with('$') {
                continue;
            }
            let row = &trace.attention[j];
            let (pos, w) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty source");
            println!("  {tok} attends most to {} ({w:.2})", enc.tokens[pos]);
        }
        if title.unresolved {
            println!("  unresolved placeholder kept literally");
        }
        println!();
    }
    Ok(())
}

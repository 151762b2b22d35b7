//! Ranks candidate sentences by perplexity under a trigram model trained on
//! in-domain titles and keeps the best ones.
//!
//! cargo run --example lm_filter

use std::collections::BTreeMap;

use slotgen::lmfilter::{filter_corpus, tokenize, NGramLm};
use slotgen::pipeline::synth::{make_synthetic_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        train: BTreeMap::from([("en".to_string(), 500)]),
        test: BTreeMap::from([("en".to_string(), 5)]),
        ..SynthSpec::default()
    };
    let corpus = make_synthetic_corpus(&spec, 11)?;
    let titles: Vec<Vec<String>> = corpus.train["en"]
        .iter()
        .filter_map(|p| p.title.as_deref())
        .map(|t| tokenize(t).into_iter().map(String::from).collect())
        .collect();
    let lm = NGramLm::train(&titles, 3)?;

    let mut candidates: Vec<String> = corpus.test["en"].iter().filter_map(|p| p.title.clone()).collect();
    candidates.extend([
        "the committee adjourned until further notice was given".to_string(),
        "Size for Blue - men Jackets Cotton M".to_string(),
        "short line".to_string(),
    ]);
    let (kept, report) = filter_corpus(&lm, &candidates, 5, 5);
    for s in &kept {
        println!("{:>10.2}  {}", s.perplexity, s.text);
    }
    println!("\n{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

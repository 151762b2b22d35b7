//! Learns BPE merges on a toy corpus, segments unseen words and decodes them
//! back. Tags and placeholders are never split.
//!
//! cargo run --example subword

use slotgen::subword::{bpe_decode, bpe_train, Protected};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus: Vec<Vec<&str>> = [
        "_cat running shoes _brand $brand|Swift\u{2581}Foot",
        "lower lowest newer newest wider widest",
        "<2fr> chaussures de course _color bleu",
    ]
    .iter()
    .map(|l| l.split(' ').collect())
    .collect();
    let model = bpe_train(&corpus, 40, Protected::defaults());
    println!("{} merges, first five: {:?}", model.merges().len(), &model.merges()[..5]);

    let input = ["<2de>", "$brand|Orbit", "slowest", "runners", "_color"];
    let pieces = model.encode(&input);
    println!("encoded  {}", pieces.join(" "));
    let decoded = bpe_decode(&pieces)?;
    println!("decoded  {}", decoded.join(" "));
    assert_eq!(decoded, input);

    print!("\n{}", model.codes_string());
    Ok(())
}

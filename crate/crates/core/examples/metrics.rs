//! Corpus BLEU, chrF1 and TER for a handful of generated titles.
//!
//! cargo run --example metrics [hyp.txt ref.txt]

use slotgen::metrics::{evaluate, ter_stats};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (hyps, refs): (Vec<String>, Vec<String>) = if let [h, r] = args.as_slice() {
        let read = |p: &str| std::fs::read_to_string(p).map(|t| t.lines().map(String::from).collect::<Vec<_>>());
        (read(h)?, read(r)?)
    } else {
        let pairs = [
            ("Swift Foot Running Shoes Blue", "Swift Foot Running Shoes Blue"),
            ("Orbit Canvas Backpacks in Black", "Orbit Black Canvas Backpacks"),
            ("Lamps by Lumen", "Brass Lamps by Lumen"),
        ];
        pairs.iter().map(|(h, r)| (h.to_string(), r.to_string())).unzip()
    };
    let report = evaluate(&hyps, &refs)?;
    println!("BLEU {:.2}  chrF1 {:.2}  TER {:.2}", report.bleu, report.chrf1, report.ter);
    for ((h, r), s) in hyps.iter().zip(&refs).zip(&report.per_sentence) {
        let t = ter_stats(h, r)?;
        println!("  {:6.2} {:6.2} {:6.2} ({} shifts)  {h}", s.bleu, s.chrf1, s.ter, t.shifts);
    }
    Ok(())
}

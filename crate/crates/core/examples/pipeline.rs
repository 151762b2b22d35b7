//! Writes a synthetic corpus with its run config, then runs the whole
//! pipeline from that config file, as `slotgen pipeline` does.
//!
//! cargo run --release --example pipeline [out_dir]

use std::path::PathBuf;

use slotgen::cli::{synth_preset, write_synthetic};
use slotgen::pipeline::run_pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("slotgen-demo"));
    let spec = synth_preset("smoke").expect("known preset");
    write_synthetic(&spec, 1, &root)?;

    let config = root.join("run.json");
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
    cfg["training"]["max_epochs"] = 10.into();
    cfg["bpe_merges"] = 200.into();
    std::fs::write(&config, serde_json::to_string_pretty(&cfg)?)?;

    let out = run_pipeline(&config)?;
    println!("{}", serde_json::to_string_pretty(&out.report.counts)?);
    println!(
        "BLEU {:.2}  chrF1 {:.2}  TER {:.2}",
        out.report.evaluation.bleu, out.report.evaluation.chrf1, out.report.evaluation.ter
    );
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

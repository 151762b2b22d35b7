//! Compares the encoder-decoder's analytic gradients with central
//! differences in double precision, tensor by tensor.
//!
//! cargo run --example gradient_check [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slotgen::corpusprep::Vocabulary;
use slotgen::numcore::grad_check;
use slotgen::seq2seq::{ModelConfig, Seq2Seq, Seq2SeqParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let mut tokens: Vec<String> = ["<pad>", "<unk>", "<s>", "</s>"].map(String::from).to_vec();
    tokens.extend((4..16).map(|i| format!("w{i}")));
    let config = ModelConfig {
        embed_dim: 6,
        hidden_dim: 8,
        dropout: 0.0,
        init_scale: 0.5,
        ..ModelConfig::desk()
    };
    let mut model = Seq2Seq::<f64>::new(config, Vocabulary::from_tokens(tokens), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let (src, trg) = (vec![4, 7, 9, 12], vec![5, 13, 15]);
    let mut grads = Seq2SeqParams::zeros(16, 6, 8);
    let loss = model.loss_and_grad::<ChaCha8Rng>(&src, &trg, None, &mut grads)?;
    println!("loss {loss:.6}");

    let frozen = model.clone();
    let report = grad_check(
        |p: &Seq2SeqParams<f64>| {
            let m = Seq2Seq {
                params: p.clone(),
                ..frozen.clone()
            };
            m.loss(&src, &trg).expect("valid ids")
        },
        &mut model.params,
        &grads,
        1e-5,
        None,
    );
    for (name, err, n) in &report.groups {
        println!("{name:<14} {n:>5} elements  max rel error {err:.2e}");
    }
    println!("overall {:.2e}", report.max_rel_error);
    Ok(())
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpusprep::{ParallelExample, Vocabulary, BOS_ID, EOS_ID};
use crate::numcore::{attention_scores, context, grad_check, gru_cell, softmax, ParamSet, Tensor};

fn vocab(words: &[&str]) -> Vocabulary {
    let mut tokens: Vec<String> = ["<pad>", "<unk>", "<s>", "</s>"].iter().map(|s| s.to_string()).collect();
    tokens.extend(words.iter().map(|s| s.to_string()));
    Vocabulary::from_tokens(tokens)
}

fn tiny_model(seed: u64, vocab_size: usize, e: usize, h: usize) -> Seq2Seq<f64> {
    let words: Vec<String> = (4..vocab_size).map(|i| format!("w{i}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let config = ModelConfig {
        embed_dim: e,
        hidden_dim: h,
        dropout: 0.0,
        seed,
        init_scale: 0.5,
        ..ModelConfig::desk()
    };
    Seq2Seq::new(config, vocab(&refs), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn single_token_encoding_sums_directions() {
    let m = tiny_model(1, 10, 4, 5);
    let enc = m.encode_ids(&[7]).unwrap();
    let x = m.params.src_embed.row(7);
    let hf = gru_cell(x, &[0.0; 5], &m.params.enc_fwd).unwrap();
    let hb = gru_cell(x, &[0.0; 5], &m.params.enc_bwd).unwrap();
    let sum: Vec<f64> = hf.iter().zip(&hb).map(|(a, b)| a + b).collect();
    assert_eq!(enc.h.rows(), 1);
    assert_close(enc.h.row(0), &sum, 1e-15);
}

#[test]
fn backward_pass_mirrors_forward_pass() {
    let m = tiny_model(2, 12, 4, 6);
    let ids = [4, 9, 5, 11, 6];
    let enc = m.encode_ids(&ids).unwrap();
    let mut swapped = m.clone();
    std::mem::swap(&mut swapped.params.enc_fwd, &mut swapped.params.enc_bwd);
    let rev: Vec<usize> = ids.iter().rev().copied().collect();
    let enc_rev = swapped.encode_ids(&rev).unwrap();
    for i in 0..ids.len() {
        assert_close(enc.h.row(i), enc_rev.h.row(ids.len() - 1 - i), 1e-14);
    }
}

#[test]
fn palindrome_with_tied_directions_is_row_symmetric() {
    let mut m = tiny_model(3, 12, 4, 6);
    m.params.enc_bwd = m.params.enc_fwd.clone();
    let ids = [4, 8, 10, 8, 4];
    let enc = m.encode_ids(&ids).unwrap();
    for i in 0..ids.len() {
        assert_close(enc.h.row(i), enc.h.row(ids.len() - 1 - i), 1e-14);
    }
}

#[test]
fn empty_source_is_rejected() {
    let m = tiny_model(1, 10, 4, 5);
    assert!(matches!(m.encode_ids(&[]), Err(Seq2SeqError::EmptySource)));
}

#[test]
fn decode_step_composition() {
    let m = tiny_model(4, 15, 5, 6);
    let enc = m.encode_ids(&[5, 6, 7, 8]).unwrap();
    let s_prev = enc.s0.clone();
    let step = m.decode_step(&enc, &s_prev, 9).unwrap();
    assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let a = attention_scores(&s_prev, &enc.h, &m.params.att).unwrap();
    let c = context(&a, &enc.h).unwrap();
    let mut x = m.params.trg_embed.row(9).to_vec();
    x.extend_from_slice(&c);
    let s = gru_cell(&x, &s_prev, &m.params.dec).unwrap();
    let probs = softmax(&m.logits(&s, &c));
    assert_close(&step.attention, &a, 1e-14);
    assert_close(&step.state, &s, 1e-14);
    assert_close(&step.probs, &probs, 1e-14);
}

#[test]
fn single_source_position_context_is_that_row() {
    let m = tiny_model(5, 10, 4, 5);
    let enc = m.encode_ids(&[6]).unwrap();
    let step = m.decode_step(&enc, &enc.s0, BOS_ID).unwrap();
    assert_eq!(step.attention, vec![1.0]);
    assert_close(&step.context, enc.h.row(0), 1e-15);
}

#[test]
fn gradients_match_finite_differences() {
    let mut m = tiny_model(11, 20, 8, 12);
    let pairs = [(vec![4, 5, 6, 7], vec![8, 9, 10]), (vec![11, 12, 13], vec![14, 15, 16, 17])];
    let mut grads = Seq2SeqParams::zeros(20, 8, 12);
    for (s, t) in &pairs {
        m.loss_and_grad::<ChaCha8Rng>(s, t, None, &mut grads).unwrap();
    }
    let model = m.clone();
    let report = grad_check(
        |p: &Seq2SeqParams<f64>| {
            let mm = Seq2Seq {
                config: model.config.clone(),
                vocab: model.vocab.clone(),
                params: p.clone(),
            };
            pairs.iter().map(|(s, t)| mm.loss(s, t).unwrap()).sum()
        },
        &mut m.params,
        &grads,
        1e-5,
        Some(40),
    );
    assert!(report.max_rel_error < 1e-4, "{:?}", report.worst());
}

#[test]
fn loss_and_grad_agrees_with_plain_loss() {
    let m = tiny_model(12, 16, 4, 6);
    let mut g = Seq2SeqParams::zeros(16, 4, 6);
    let a = m.loss_and_grad::<ChaCha8Rng>(&[4, 5, 6], &[7, 8], None, &mut g).unwrap();
    let b = m.loss(&[4, 5, 6], &[7, 8]).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn greedy_equals_argmax_rollout() {
    let m = tiny_model(6, 14, 5, 7);
    let enc = m.encode_ids(&[4, 5, 6]).unwrap();
    let trace = m.generate(&enc, 8, 1).unwrap();
    let mut s = enc.s0.clone();
    let mut y = BOS_ID;
    for (j, &id) in trace.ids.iter().enumerate() {
        let step = m.decode_step(&enc, &s, y).unwrap();
        let best = (0..step.probs.len()).fold(0, |b, k| if step.probs[k] > step.probs[b] { k } else { b });
        assert_eq!(id, best, "step {j}");
        assert_close(&trace.attention[j], &step.attention, 0.0);
        s = step.state;
        y = id;
    }
    assert!(trace.ids.len() == 8 || *trace.ids.last().unwrap() == EOS_ID);
}

#[test]
fn max_len_one_emits_one_token() {
    let m = tiny_model(7, 14, 5, 7);
    let enc = m.encode_ids(&[4, 5]).unwrap();
    for beam in [1, 3] {
        let trace = m.generate(&enc, 1, beam).unwrap();
        assert_eq!(trace.tokens.len(), 1);
        assert_eq!(trace.attention.len(), 1);
    }
}

#[test]
fn beam_trace_rows_are_simplices() {
    let m = tiny_model(8, 14, 5, 7);
    let enc = m.encode_ids(&[4, 5, 9, 10]).unwrap();
    let trace = m.generate(&enc, 10, 4).unwrap();
    assert_eq!(trace.attention.len(), trace.tokens.len());
    for row in &trace.attention {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn trace_with(tokens: &[&str], attention: Vec<Vec<f64>>) -> DecodeTrace {
    DecodeTrace {
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        ids: vec![0; tokens.len()],
        attention,
        states: vec![],
        score: 0.0,
    }
}

fn encoder_with(tokens: &[&str]) -> EncoderOutput<f64> {
    let m = tiny_model(1, 10, 2, 2);
    m.encode(tokens).unwrap()
}

#[test]
fn single_placeholder_is_forced() {
    let enc = encoder_with(&["_brand", "$brand|ACME", "_cat", "Shoes"]);
    for row in [vec![0.97, 0.01, 0.01, 0.01], vec![0.0, 0.0, 0.0, 1.0]] {
        let trace = trace_with(&["$brand", "Shoes", "</s>"], vec![row.clone(), row.clone(), row]);
        let r = resolve_placeholders(&trace, &enc).unwrap();
        assert_eq!(r.text, "ACME Shoes");
        assert_eq!(r.mapping, vec![(0, 1)]);
    }
}

#[test]
fn two_placeholders_follow_attention() {
    let enc = encoder_with(&["$brand|Foo▁Bar", "x", "$brand|Baz"]);
    // Every assignment of peaks to the two output placeholders.
    for (p1, p2) in [(0, 2), (2, 0), (0, 0), (2, 2)] {
        let row = |peak: usize| (0..3).map(|i| if i == peak { 0.8 } else { 0.1 }).collect::<Vec<f64>>();
        let trace = trace_with(&["$brand", "and", "$brand"], vec![row(p1), row(1), row(p2)]);
        let r = resolve_placeholders(&trace, &enc).unwrap();
        let first = if p1 == 0 { "Foo Bar" } else { "Baz" };
        let second = if first == "Baz" { "Foo Bar" } else { "Baz" };
        assert_eq!(r.text, format!("{first} and {second}"));
        assert_ne!(r.mapping[0].1, r.mapping[1].1);
    }
}

#[test]
fn attention_ties_go_to_lowest_position() {
    let enc = encoder_with(&["$brand|A", "$brand|B"]);
    let trace = trace_with(&["$brand"], vec![vec![0.5, 0.5]]);
    assert_eq!(resolve_placeholders(&trace, &enc).unwrap().text, "A");
}

#[test]
fn same_type_is_preferred_and_fallback_is_flagged() {
    let enc = encoder_with(&["$color|Red", "$brand|Acme"]);
    let trace = trace_with(&["$brand", "$brand"], vec![vec![0.9, 0.1], vec![0.9, 0.1]]);
    let r = resolve_placeholders(&trace, &enc).unwrap();
    assert_eq!(r.text, "Acme Red");
    assert!(r.type_fallback);
}

#[test]
fn surplus_placeholder_is_unresolved() {
    let enc = encoder_with(&["$brand|Acme", "x"]);
    let trace = trace_with(&["$brand", "$brand"], vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    match resolve_placeholders(&trace, &enc) {
        Err(Seq2SeqError::UnresolvedPlaceholder { index, partial, .. }) => {
            assert_eq!(index, 1);
            assert_eq!(partial, "Acme $brand");
        }
        other => panic!("expected UnresolvedPlaceholder, got {other:?}"),
    }
}

#[test]
fn subword_pieces_are_joined() {
    let enc = encoder_with(&["$brand|Acme"]);
    let trace = trace_with(&["Sne@@", "akers", "$brand", "ab@@", "</s>"], vec![vec![1.0]; 5]);
    assert_eq!(resolve_placeholders(&trace, &enc).unwrap().text, "Sneakers Acme ab");
}

fn toy_corpus() -> (Vocabulary, Vec<ParallelExample>) {
    let rows = [
        ("_cat shoes _color red", "red shoes"),
        ("_cat shoes _color blue", "blue shoes"),
        ("_cat hats _color red", "red hats"),
        ("_cat hats _color green", "green hats"),
        ("_cat bags _color blue", "blue bags"),
        ("_cat bags _color green", "green bags"),
        ("_cat socks _color red", "red socks"),
        ("_cat socks _color blue", "blue socks"),
        ("_cat coats _color green", "green coats"),
        ("_cat coats _color red", "red coats"),
    ];
    let examples: Vec<ParallelExample> = rows.iter().map(|(s, t)| ParallelExample::from_text(s, t, "en").unwrap()).collect();
    let v = crate::corpusprep::build_vocab(&examples, 100).unwrap();
    (v, examples)
}

fn dev_of(examples: &[ParallelExample]) -> Vec<DevExample> {
    examples
        .iter()
        .map(|e| DevExample {
            source: e.source.clone(),
            reference: e.target.join(" "),
        })
        .collect()
}

fn toy_config(dropout: f64) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        hidden_dim: 16,
        dropout,
        max_target_len: 6,
        ..ModelConfig::desk()
    }
}

fn toy_train(dropout: f64, epochs: usize) -> TrainOutcome<f32> {
    let (v, ex) = toy_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = Seq2Seq::<f32>::new(toy_config(dropout), v, &mut rng).unwrap();
    let cfg = TrainConfig {
        batch_size: 2,
        max_epochs: epochs,
        patience: epochs,
        adam: crate::numcore::AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    train(model, &ex, &dev_of(&ex), &cfg, &mut rng).unwrap()
}

#[test]
fn training_reduces_loss_and_tracks_best() {
    let out = toy_train(0.2, 20);
    let losses: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
    let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    for k in 0..losses.len() - 6 {
        assert!(avg(&losses[k + 3..k + 6]) < avg(&losses[k..k + 3]) + 0.05, "{losses:?}");
    }
    assert!(losses[19] < losses[0] * 0.5);
    for r in &out.history {
        assert!(out.best_bleu >= r.dev_bleu);
    }
    assert_eq!(out.history[out.best_epoch - 1].dev_bleu, out.best_bleu);
}

#[test]
fn training_is_deterministic() {
    let a = toy_train(0.0, 3);
    let b = toy_train(0.0, 3);
    assert_eq!(a.model.params, b.model.params);
    let c = toy_train(0.2, 3);
    let d = toy_train(0.2, 3);
    assert_eq!(c.model.params, d.model.params);
}

#[test]
fn overfits_a_single_pair() {
    let ex = vec![ParallelExample::from_text("_cat shoes _brand $brand", "$brand shoes for men", "en").unwrap()];
    let v = crate::corpusprep::build_vocab(&ex, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Seq2Seq::<f32>::new(toy_config(0.0), v, &mut rng).unwrap();
    let cfg = TrainConfig {
        batch_size: 1,
        max_epochs: 150,
        min_epochs: 150,
        stop_at_bleu: Some(100.0),
        adam: crate::numcore::AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let dev = vec![DevExample {
        source: "_cat shoes _brand $brand|Acme▁Co".split(' ').map(String::from).collect(),
        reference: "Acme Co shoes for men".into(),
    }];
    let out = train(model, &ex, &dev, &cfg, &mut rng).unwrap();
    let (_, trace) = out.model.translate(&["_cat", "shoes", "_brand", "$brand"]).unwrap();
    assert_eq!(trace.tokens, vec!["$brand", "shoes", "for", "men", "</s>"]);
    assert_eq!(out.best_bleu, 100.0);
}

#[test]
fn checkpoint_round_trip_reproduces_generation() {
    let out = toy_train(0.2, 2);
    let ckpt = Checkpoint {
        model: out.model.clone(),
        epoch: out.best_epoch,
        dev_bleu_history: out.dev_bleu_history(),
        preprocess: Some(serde_json::json!({"note": "x"})),
    };
    let bytes = ckpt.to_bytes();
    assert!(bytes.starts_with(b"SLOTGEN-CKPT v1\n"));
    let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes(), bytes);
    let src = ["_cat", "hats", "_color", "blue"];
    let (_, t1) = ckpt.model.translate(&src).unwrap();
    let (_, t2) = back.model.translate(&src).unwrap();
    assert_eq!(t1, t2);

    let wide = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(wide.model.params.cast::<f32>(), ckpt.model.params);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let out = toy_train(0.0, 1);
    let bytes = Checkpoint::new(out.model).to_bytes();
    assert!(Checkpoint::<f32>::from_bytes(&bytes[1..]).is_err());
    assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::<f32>::from_bytes(&extra).is_err());
}

#[test]
fn param_names_are_unique_and_aligned() {
    let p = Seq2SeqParams::<f64>::zeros(5, 2, 3);
    let names = p.names();
    let set: std::collections::BTreeSet<_> = names.iter().collect();
    assert_eq!(set.len(), names.len());
    assert_eq!(names.len(), p.tensors().len());
    let t: &Tensor<f64> = p.tensors()[names.iter().position(|n| n == "out.w").unwrap()];
    assert_eq!(t.shape(), &[5, 6]);
}

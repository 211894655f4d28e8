//! Benchmark fixtures: deterministic random CRF instances, LSTM cells, and a
//! small end-to-end model shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtag_core::crf::{CrfParams, Emissions};
use seqtag_core::data::Sentence;
use seqtag_core::rng::CountingRng;
use seqtag_core::tensor::Tape;
use seqtag_core::trainer::{Model, TrainConfig};
use seqtag_core::{LabelSet, LstmCell, Vocab};

pub fn random_crf_instance(tape: &mut Tape, t_len: usize, k: usize, seed: u64) -> (CrfParams, Emissions) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let crf = CrfParams::zeros(tape, k, 2).expect("crf params");
    let values = draw(k * k);
    tape.data_mut(crf.transitions).copy_from_slice(&values);
    let values = draw(k);
    tape.data_mut(crf.start).copy_from_slice(&values);
    let values = draw(k);
    tape.data_mut(crf.stop).copy_from_slice(&values);
    let scores = tape.param(draw(t_len * k), &[t_len, k]).expect("emissions");
    let em = Emissions::from_tensor(tape, scores).expect("emission shape");
    (crf, em)
}

pub fn random_cell(tape: &mut Tape, input: usize, hidden: usize, seed: u64) -> LstmCell {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LstmCell::init(tape, input, hidden, &mut rng).expect("cell init")
}

/// A small trained-shape model plus one numberized sentence for step benches.
pub fn demo_model(seed: u64) -> (Model, Sentence) {
    let config = TrainConfig {
        hidden: 24,
        word_dim: 12,
        char_dim: 6,
        ..TrainConfig::default()
    };
    let mut words = Vocab::new(true);
    let mut chars = Vocab::new(false);
    let tokens = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"];
    let mut buf = [0u8; 4];
    for t in &tokens {
        words.add(t);
        for c in t.chars() {
            chars.add(c.encode_utf8(&mut buf));
        }
    }
    let labels = LabelSet::from_items(vec![
        "B-LOC".into(),
        "B-PER".into(),
        "I-LOC".into(),
        "I-PER".into(),
        "O".into(),
    ])
    .expect("label set");
    let mut model = Model::with_shapes(config.clone(), words, chars, labels, 0).expect("model");
    let mut rng = CountingRng::seed_from_u64(seed);
    let mut init = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let table: Vec<f64> = (0..model.words.len() * config.word_dim)
        .map(|_| init.random_range(-0.25..0.25))
        .collect();
    model.randomize(&table, &mut rng).expect("randomize");

    let raw_tokens: Vec<String> = (0..12).map(|i| tokens[i % tokens.len()].to_string()).collect();
    let word_ids = raw_tokens.iter().map(|t| model.words.lookup(t)).collect();
    let char_ids = raw_tokens
        .iter()
        .map(|t| {
            t.chars()
                .map(|c| model.chars.lookup(c.encode_utf8(&mut buf)))
                .collect()
        })
        .collect();
    let gold_labels = (0..12).map(|i| i % 5).collect();
    let sentence = Sentence {
        tokens: raw_tokens,
        word_ids,
        char_ids,
        gold_labels,
        aux: None,
    };
    (model, sentence)
}

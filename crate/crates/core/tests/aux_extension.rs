//! Zero-extension oracle for the auxiliary input channel: widening a model
//! with an all-zero auxiliary channel (zero-initialized extra input columns
//! on layer 1, zero-valued aux vectors) must not change any prediction.

use seqtag_core::data::RawSentence;
use seqtag_core::rng::CountingRng;
use seqtag_core::trainer::{Model, TrainConfig};
use seqtag_core::{LabelSet, Vocab};

fn corpus() -> Vec<RawSentence> {
    let mk = |tokens: &[&str], labels: &[&str]| {
        RawSentence::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
    };
    vec![
        mk(&["mr", "alice", "went", "home"], &["O", "B-PER", "O", "O"]),
        mk(&["in", "paris", "today"], &["O", "B-LOC", "O"]),
        mk(&["bob", "met", "carol"], &["B-PER", "O", "B-PER"]),
        mk(&["the", "dog", "in", "rome"], &["O", "O", "O", "B-LOC"]),
    ]
}

#[test]
fn zero_valued_aux_channel_changes_no_predictions() {
    let sentences = corpus();
    let config = TrainConfig {
        hidden: 5,
        word_dim: 4,
        char_dim: 3,
        ..TrainConfig::default()
    };
    let build = seqtag_core::data::build_vocab(&sentences, None, config.lowercase);
    let chars = seqtag_core::data::build_char_vocab(&sentences);
    let labels = LabelSet::from_sentences(&sentences).unwrap();

    // base model without the auxiliary channel
    let mut base = Model::with_shapes(
        config.clone(),
        build.vocab.clone(),
        chars.clone(),
        labels.clone(),
        0,
    )
    .unwrap();
    let mut rng = CountingRng::seed_from_u64(77);
    let table: Vec<f64> = (0..build.vocab.len() * config.word_dim)
        .map(|i| ((i * 31 + 7) % 23) as f64 / 25.0 - 0.4)
        .collect();
    base.randomize(&table, &mut rng).unwrap();

    // widened model: identical parameters, plus zero-initialized layer-1
    // input columns for a 2-wide auxiliary channel
    let aux_dim = 2;
    let mut wide = Model::with_shapes(config.clone(), build.vocab.clone(), chars, labels, aux_dim).unwrap();
    let base_params = base.export_params();
    let mut wide_blocks = wide.export_params();
    let rep_dim = config.word_dim + 2 * config.char_dim;
    for ((name, shape, values), (_, wide_shape, wide_values)) in
        base_params.iter().zip(wide_blocks.iter_mut())
    {
        if name == "layer1_fwd.w_x" || name == "layer1_bwd.w_x" {
            // copy row by row, leaving the appended aux columns at zero
            assert_eq!(wide_shape[1], rep_dim + aux_dim);
            for row in 0..shape[0] {
                let src = &values[row * rep_dim..(row + 1) * rep_dim];
                wide_values[row * (rep_dim + aux_dim)..row * (rep_dim + aux_dim) + rep_dim]
                    .copy_from_slice(src);
            }
        } else {
            wide_values.copy_from_slice(values);
        }
    }
    wide.load_params(&wide_blocks).unwrap();

    // zero aux vectors on the widened model's inputs
    let mut with_aux = sentences.clone();
    for s in &mut with_aux {
        s.aux = Some(vec![vec![0.0; aux_dim]; s.tokens.len()]);
    }
    let plain = base.numberize(&sentences).unwrap();
    let padded = wide.numberize(&with_aux).unwrap();
    for (a, b) in plain.iter().zip(&padded) {
        let got_a = base.predict_sentence(a).unwrap();
        let got_b = wide.predict_sentence(b).unwrap();
        assert_eq!(got_a, got_b, "aux zero-extension changed a prediction");
    }
}

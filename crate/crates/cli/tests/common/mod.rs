//! Test support: a deterministic synthetic NER corpus and small helpers
//! shared between the CLI tests and the acceptance suite.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtag_core::data::RawSentence;

/// Synthetic corpus over a ~200-token vocabulary with 5 labels
/// (O, B-PER, I-PER, B-LOC, I-LOC). Entities carry both a positional signal
/// (a trigger word precedes them) and a lexical one (name pools with shared
/// prefixes), so a working model should reach near-perfect F1.
pub fn synth_corpus(seed: u64, count: usize) -> Vec<RawSentence> {
    let fillers: Vec<String> = (0..100).map(|i| format!("w{i:02}")).collect();
    let people: Vec<String> = (0..40).map(|i| format!("pname{i:02}")).collect();
    let places: Vec<String> = (0..40).map(|i| format!("lname{i:02}")).collect();
    let per_triggers = ["mr", "mrs", "dr"];
    let loc_triggers = ["in", "at", "near"];
    let common = [
        "the", "a", "of", "and", "to", "with", "for", "on", "by", "as", "is", "was", "it", "that",
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tokens: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let push_filler = |tokens: &mut Vec<String>, labels: &mut Vec<String>, rng: &mut ChaCha8Rng| {
            let token = if rng.random::<f64>() < 0.3 {
                common[rng.random_range(0..common.len())].to_string()
            } else {
                fillers[rng.random_range(0..fillers.len())].clone()
            };
            tokens.push(token);
            labels.push("O".to_string());
        };

        let lead = rng.random_range(1..=3);
        for _ in 0..lead {
            push_filler(&mut tokens, &mut labels, &mut rng);
        }
        let entity_groups = rng.random_range(1..=2);
        for _ in 0..entity_groups {
            let is_person = rng.random::<bool>();
            let (trigger, pool, tag) = if is_person {
                (per_triggers[rng.random_range(0..3)], &people, "PER")
            } else {
                (loc_triggers[rng.random_range(0..3)], &places, "LOC")
            };
            tokens.push(trigger.to_string());
            labels.push("O".to_string());
            tokens.push(pool[rng.random_range(0..pool.len())].clone());
            labels.push(format!("B-{tag}"));
            if rng.random::<f64>() < 0.35 {
                tokens.push(pool[rng.random_range(0..pool.len())].clone());
                labels.push(format!("I-{tag}"));
            }
            let tail = rng.random_range(1..=3);
            for _ in 0..tail {
                push_filler(&mut tokens, &mut labels, &mut rng);
            }
        }
        sentences.push(RawSentence::new(tokens, labels));
    }
    sentences
}

pub fn write_corpus(path: &Path, sentences: &[RawSentence]) {
    let mut out = Vec::new();
    seqtag_core::data::write_conll(&mut out, sentences).unwrap();
    std::fs::write(path, out).unwrap();
}

pub fn labels_of(sentences: &[RawSentence]) -> Vec<Vec<String>> {
    sentences.iter().map(|s| s.labels.clone()).collect()
}

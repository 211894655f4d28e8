//! Entity-level precision/recall/F1 with conlleval semantics, and the paired
//! approximate randomization significance test.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A typed entity span: token indices, start inclusive, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub etype: String,
}

fn split_label(label: &str) -> (char, &str) {
    if let Some(ty) = label.strip_prefix("B-") {
        ('B', ty)
    } else if let Some(ty) = label.strip_prefix("I-") {
        ('I', ty)
    } else {
        // "O" and anything unparseable both end any open span
        ('O', "")
    }
}

/// Extracts entity spans from an IOB2 label sequence. `I-` after `O`, after a
/// different type, or at the start defensively opens a new span (treated as
/// `B-`). The result is sorted by start and spans never overlap.
pub fn extract_entities<S: AsRef<str>>(labels: &[S]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (t, label) in labels.iter().enumerate() {
        let (tag, ty) = split_label(label.as_ref());
        let continues = tag == 'I' && matches!(&open, Some((_, oty)) if oty == ty);
        if !continues {
            if let Some((start, oty)) = open.take() {
                spans.push(EntitySpan {
                    start,
                    end: t,
                    etype: oty,
                });
            }
            if tag != 'O' {
                open = Some((t, ty.to_string()));
            }
        }
    }
    if let Some((start, oty)) = open {
        spans.push(EntitySpan {
            start,
            end: labels.len(),
            etype: oty,
        });
    }
    spans
}

/// Gold/predicted/correct counts for one entity type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypeCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl TypeCounts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

/// Micro-averaged entity F1 over a corpus, with a per-type breakdown.
/// Values are in [0, 1]; renderers multiply by 100.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub per_type: BTreeMap<String, TypeCounts>,
}

impl EvalReport {
    /// Human-readable aligned table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "entities: gold {}, predicted {}, correct {}\n",
            self.gold, self.predicted, self.correct
        ));
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9}\n",
            "type", "precision", "recall", "f1"
        ));
        out.push_str(&format!(
            "{:<10} {:>9.2} {:>9.2} {:>9.2}\n",
            "ALL",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1
        ));
        for (ty, counts) in &self.per_type {
            out.push_str(&format!(
                "{:<10} {:>9.2} {:>9.2} {:>9.2}\n",
                ty,
                100.0 * counts.precision(),
                100.0 * counts.recall(),
                100.0 * counts.f1()
            ));
        }
        out
    }

    /// Machine-readable key=value block (full precision).
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("precision={:.8}\n", self.precision));
        out.push_str(&format!("recall={:.8}\n", self.recall));
        out.push_str(&format!("f1={:.8}\n", self.f1));
        out.push_str(&format!("gold={}\n", self.gold));
        out.push_str(&format!("predicted={}\n", self.predicted));
        out.push_str(&format!("correct={}\n", self.correct));
        for (ty, counts) in &self.per_type {
            out.push_str(&format!(
                "type.{ty}.precision={:.8}\ntype.{ty}.recall={:.8}\ntype.{ty}.f1={:.8}\n",
                counts.precision(),
                counts.recall(),
                counts.f1()
            ));
        }
        out
    }
}

fn micro_f1(gold: usize, predicted: usize, correct: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 {
        0.0
    } else {
        correct as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        correct as f64 / gold as f64
    };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

fn check_aligned<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Argument(format!(
            "gold has {} sentences, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Argument(format!(
                "sentence {i}: gold has {} tokens, prediction has {}",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// Entity-level micro-averaged P/R/F1: an entity counts as correct only when
/// type, start, and end all match exactly.
pub fn f1_score<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let mut per_type: BTreeMap<String, TypeCounts> = BTreeMap::new();
    let (mut g_total, mut p_total, mut c_total) = (0, 0, 0);
    for (g_labels, p_labels) in gold.iter().zip(pred) {
        let g_spans = extract_entities(g_labels);
        let p_spans = extract_entities(p_labels);
        for span in &g_spans {
            per_type.entry(span.etype.clone()).or_default().gold += 1;
        }
        for span in &p_spans {
            per_type.entry(span.etype.clone()).or_default().predicted += 1;
        }
        for span in &p_spans {
            if g_spans.contains(span) {
                per_type.entry(span.etype.clone()).or_default().correct += 1;
                c_total += 1;
            }
        }
        g_total += g_spans.len();
        p_total += p_spans.len();
    }
    let (precision, recall, f1) = micro_f1(g_total, p_total, c_total);
    Ok(EvalReport {
        precision,
        recall,
        f1,
        gold: g_total,
        predicted: p_total,
        correct: c_total,
        per_type,
    })
}

/// Per-sentence counts that are sufficient to recompute micro F1 after any
/// assignment of systems to sentences.
#[derive(Debug, Clone, Copy)]
struct SentenceCounts {
    gold: usize,
    predicted: usize,
    correct: usize,
}

fn sentence_counts<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Vec<SentenceCounts> {
    gold.iter()
        .zip(pred)
        .map(|(g_labels, p_labels)| {
            let g_spans = extract_entities(g_labels);
            let p_spans = extract_entities(p_labels);
            let correct = p_spans.iter().filter(|s| g_spans.contains(s)).count();
            SentenceCounts {
                gold: g_spans.len(),
                predicted: p_spans.len(),
                correct,
            }
        })
        .collect()
}

fn f1_from_counts(counts: impl Iterator<Item = SentenceCounts>) -> f64 {
    let (mut g, mut p, mut c) = (0, 0, 0);
    for s in counts {
        g += s.gold;
        p += s.predicted;
        c += s.correct;
    }
    micro_f1(g, p, c).2
}

/// Approximate randomization test on |F1_a - F1_b|: each round swaps the two
/// systems' predictions per sentence with probability one half and recounts
/// how often the shuffled difference reaches the observed one. Returns
/// p = (1 + #{rounds >= observed}) / (1 + iterations). Each round uses its
/// own generator seeded from `rng`, so the result depends only on the seed
/// schedule, not on execution order.
pub fn randomization_test<S: AsRef<str>, T: AsRef<str>, U: AsRef<str>>(
    gold: &[Vec<S>],
    pred_a: &[Vec<T>],
    pred_b: &[Vec<U>],
    iterations: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    check_aligned(gold, pred_a)?;
    check_aligned(gold, pred_b)?;
    if iterations == 0 {
        return Err(Error::Argument("iterations must be at least 1".into()));
    }
    let counts_a = sentence_counts(gold, pred_a);
    let counts_b = sentence_counts(gold, pred_b);
    let f1_a = f1_from_counts(counts_a.iter().copied());
    let f1_b = f1_from_counts(counts_b.iter().copied());
    let observed = (f1_a - f1_b).abs();

    let seeds: Vec<u64> = (0..iterations).map(|_| rng.random()).collect();
    let mut at_least = 0usize;
    for seed in seeds {
        let mut round_rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ga, mut pa, mut ca) = (0, 0, 0);
        let (mut gb, mut pb, mut cb) = (0, 0, 0);
        for (a, b) in counts_a.iter().zip(&counts_b) {
            let (x, y) = if round_rng.random::<bool>() { (b, a) } else { (a, b) };
            ga += x.gold;
            pa += x.predicted;
            ca += x.correct;
            gb += y.gold;
            pb += y.predicted;
            cb += y.correct;
        }
        let delta = (micro_f1(ga, pa, ca).2 - micro_f1(gb, pb, cb).2).abs();
        if delta >= observed {
            at_least += 1;
        }
    }
    Ok((1 + at_least) as f64 / (1 + iterations) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    /// Quadratic reference: for every candidate (type, start, end), check that
    /// the labels encode exactly that span.
    fn reference_spans(seq: &[String]) -> Vec<EntitySpan> {
        let fast = |t: usize| split_label(&seq[t]);
        let mut spans = Vec::new();
        for start in 0..seq.len() {
            let (tag, ty) = fast(start);
            if tag == 'O' {
                continue;
            }
            // span starts here iff it is a B, or an I that cannot continue
            let starts = tag == 'B'
                || start == 0
                || {
                    let (ptag, pty) = fast(start - 1);
                    ptag == 'O' || pty != ty
                };
            if !starts {
                continue;
            }
            let mut end = start + 1;
            while end < seq.len() {
                let (ntag, nty) = fast(end);
                if ntag == 'I' && nty == ty {
                    end += 1;
                } else {
                    break;
                }
            }
            spans.push(EntitySpan {
                start,
                end,
                etype: ty.to_string(),
            });
        }
        spans
    }

    #[test]
    fn simple_span() {
        let spans = extract_entities(&labels(&["B-PER", "I-PER", "O"]));
        assert_eq!(
            spans,
            vec![EntitySpan {
                start: 0,
                end: 2,
                etype: "PER".into()
            }]
        );
    }

    #[test]
    fn all_outside_is_empty() {
        assert!(extract_entities(&labels(&["O", "O", "O"])).is_empty());
    }

    #[test]
    fn defensive_inside_starts_new_span() {
        let spans = extract_entities(&labels(&["I-PER", "O", "B-LOC", "I-PER"]));
        assert_eq!(spans.len(), 3);
        assert_eq!(spans[0].etype, "PER");
        assert_eq!((spans[1].start, spans[1].end), (2, 3));
        assert_eq!((spans[2].start, spans[2].end), (3, 4));
    }

    #[test]
    fn random_sequences_match_quadratic_reference() {
        // deterministic pseudo-random label sequences
        let alphabet = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"];
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        for _ in 0..50 {
            let len = 1 + next() % 12;
            let seq: Vec<String> = (0..len)
                .map(|_| alphabet[next() % alphabet.len()].to_string())
                .collect();
            let got = extract_entities(&seq);
            let want = reference_spans(&seq);
            assert_eq!(got, want, "sequence {seq:?}");
            // sorted by start, non-overlapping
            for pair in got.windows(2) {
                assert!(pair[0].end <= pair[1].start);
            }
        }
    }

    #[test]
    fn identical_predictions_score_one() {
        let gold = vec![labels(&["B-PER", "I-PER", "O"]), labels(&["O", "B-LOC"])];
        let report = f1_score(&gold, &gold).unwrap();
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn all_outside_prediction_scores_zero() {
        let gold = vec![labels(&["B-PER", "O"])];
        let pred = vec![labels(&["O", "O"])];
        let report = f1_score(&gold, &pred).unwrap();
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn hand_counted_fixture() {
        // 4 gold spans, 3 predicted, 2 correct: P = 2/3, R = 1/2, F1 = 4/7
        let gold = vec![
            labels(&["B-PER", "I-PER", "O"]),
            labels(&["B-LOC", "O", "B-PER"]),
            labels(&["B-ORG"]),
        ];
        let pred = vec![
            labels(&["B-PER", "I-PER", "O"]),
            labels(&["B-LOC", "O", "O"]),
            labels(&["B-PER"]),
        ];
        let report = f1_score(&gold, &pred).unwrap();
        assert_eq!(report.gold, 4);
        assert_eq!(report.predicted, 3);
        assert_eq!(report.correct, 2);
        assert!((report.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.recall - 0.5).abs() < 1e-12);
        assert!((report.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!(report.to_text().contains("ALL"));
        assert!(report.to_kv().contains("f1=0.57142857"));
    }

    #[test]
    fn f1_is_symmetric_under_sentence_reordering() {
        let gold = vec![
            labels(&["B-PER", "O"]),
            labels(&["B-LOC", "I-LOC"]),
            labels(&["O"]),
        ];
        let pred = vec![
            labels(&["B-PER", "O"]),
            labels(&["O", "B-LOC"]),
            labels(&["B-ORG"]),
        ];
        let a = f1_score(&gold, &pred).unwrap();
        let order = [2, 0, 1];
        let gold2: Vec<_> = order.iter().map(|&i| gold[i].clone()).collect();
        let pred2: Vec<_> = order.iter().map(|&i| pred[i].clone()).collect();
        let b = f1_score(&gold2, &pred2).unwrap();
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.correct, b.correct);
    }

    #[test]
    fn mismatched_lengths_are_argument_errors() {
        let gold = vec![labels(&["O", "O"])];
        let pred = vec![labels(&["O"])];
        assert!(matches!(f1_score(&gold, &pred), Err(Error::Argument(_))));
    }

    #[test]
    fn identical_systems_have_p_one() {
        let gold = vec![labels(&["B-PER", "O"]), labels(&["B-LOC"])];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = randomization_test(&gold, &gold, &gold, 2000, &mut rng).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn extreme_separation_gives_small_p() {
        // system A perfect, system B all-O, 20 sentences
        let gold: Vec<Vec<String>> = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    labels(&["B-PER", "I-PER", "O"])
                } else {
                    labels(&["O", "B-LOC", "O"])
                }
            })
            .collect();
        let pred_b: Vec<Vec<String>> = gold
            .iter()
            .map(|s| vec!["O".to_string(); s.len()])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = randomization_test(&gold, &gold, &pred_b, 5000, &mut rng).unwrap();
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn p_values_converge_across_iteration_counts() {
        // a mixed fixture with a moderate difference
        let gold: Vec<Vec<String>> = (0..12)
            .map(|_| labels(&["B-PER", "O", "B-LOC"]))
            .collect();
        let pred_a: Vec<Vec<String>> = (0..12)
            .map(|i| {
                if i < 8 {
                    labels(&["B-PER", "O", "B-LOC"])
                } else {
                    labels(&["O", "O", "B-LOC"])
                }
            })
            .collect();
        let pred_b: Vec<Vec<String>> = (0..12)
            .map(|i| {
                if i < 6 {
                    labels(&["B-PER", "O", "B-LOC"])
                } else {
                    labels(&["O", "O", "O"])
                }
            })
            .collect();
        let mut rng1 = ChaCha8Rng::seed_from_u64(7);
        let p1 = randomization_test(&gold, &pred_a, &pred_b, 1000, &mut rng1).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(8);
        let p2 = randomization_test(&gold, &pred_a, &pred_b, 10000, &mut rng2).unwrap();
        assert!((p1 - p2).abs() <= 0.02, "p1 = {p1}, p2 = {p2}");
        assert!((0.0..=1.0).contains(&p1));
    }

    #[test]
    fn zero_iterations_rejected() {
        let gold = vec![labels(&["O"])];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            randomization_test(&gold, &gold, &gold, 0, &mut rng),
            Err(Error::Argument(_))
        ));
    }
}

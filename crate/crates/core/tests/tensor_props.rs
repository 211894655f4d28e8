//! Property tests for the tape: every differentiable operation agrees with
//! central finite differences on randomized inputs, and logsumexp respects
//! its analytic bounds.

mod common;

use proptest::prelude::*;
use seqtag_core::tensor::{Tape, TensorId};

fn check_unary(vals: &[f64], build: impl Fn(&mut Tape, TensorId) -> TensorId + Copy, tol: f64) {
    let mut tape = Tape::new();
    let x = tape.param(vals.to_vec(), &[vals.len()]).unwrap();
    let mark = tape.len();
    let f = move |tp: &mut Tape| {
        let y = build(tp, x);
        tp.sum(y)
    };
    let fd = common::finite_diff(&mut tape, &[x], mark, 1e-5, f);
    tape.truncate(mark);
    let loss = f(&mut tape);
    tape.backward(loss).unwrap();
    common::assert_grads_close(&tape, &[x], &fd, tol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unary_ops_match_finite_differences(vals in prop::collection::vec(-2.0..2.0f64, 1..6)) {
        check_unary(&vals, |tp, x| tp.tanh(x), 1e-4);
        check_unary(&vals, |tp, x| tp.sigmoid(x), 1e-4);
        check_unary(&vals, |tp, x| tp.exp(x), 1e-4);
        check_unary(&vals, |tp, x| tp.neg(x), 1e-4);
        check_unary(&vals, |tp, x| tp.scale(x, -1.7), 1e-4);
    }

    #[test]
    fn log_matches_finite_differences(vals in prop::collection::vec(0.05..2.0f64, 1..6)) {
        check_unary(&vals, |tp, x| tp.log(x).unwrap(), 1e-4);
    }

    #[test]
    fn logsumexp_gradient_matches_finite_differences(vals in prop::collection::vec(-2.0..2.0f64, 1..6)) {
        check_unary(&vals, |tp, x| tp.logsumexp(x).unwrap(), 1e-4);
    }

    #[test]
    fn binary_ops_match_finite_differences(
        a in prop::collection::vec(-2.0..2.0f64, 1..6),
        bseed in prop::collection::vec(-2.0..2.0f64, 1..6),
    ) {
        let b: Vec<f64> = a.iter().zip(bseed.iter().cycle()).map(|(x, y)| x * 0.5 + y).collect();
        for op in 0..3 {
            let mut tape = Tape::new();
            let xa = tape.param(a.clone(), &[a.len()]).unwrap();
            let xb = tape.param(b.clone(), &[b.len()]).unwrap();
            let mark = tape.len();
            let f = move |tp: &mut Tape| {
                let y = match op {
                    0 => tp.add(xa, xb).unwrap(),
                    1 => tp.sub(xa, xb).unwrap(),
                    _ => tp.mul(xa, xb).unwrap(),
                };
                tp.sum(y)
            };
            let fd = common::finite_diff(&mut tape, &[xa, xb], mark, 1e-5, f);
            tape.truncate(mark);
            let loss = f(&mut tape);
            tape.backward(loss).unwrap();
            common::assert_grads_close(&tape, &[xa, xb], &fd, 1e-4);
        }
    }

    #[test]
    fn matmul_matches_finite_differences(
        m in 1usize..4, k in 1usize..4, n in 1usize..4,
        seed in prop::collection::vec(-2.0..2.0f64, 32),
    ) {
        let mut tape = Tape::new();
        let a = tape.param(seed[..m * k].to_vec(), &[m, k]).unwrap();
        let b = tape.param(seed[m * k..m * k + k * n].to_vec(), &[k, n]).unwrap();
        let mark = tape.len();
        let f = move |tp: &mut Tape| {
            let c = tp.matmul(a, b).unwrap();
            tp.sum(c)
        };
        let fd = common::finite_diff(&mut tape, &[a, b], mark, 1e-5, f);
        tape.truncate(mark);
        let loss = f(&mut tape);
        tape.backward(loss).unwrap();
        common::assert_grads_close(&tape, &[a, b], &fd, 1e-4);
    }

    #[test]
    fn logsumexp_respects_bounds(vals in prop::collection::vec(-1000.0..1000.0f64, 1..8)) {
        let mut tape = Tape::new();
        let x = tape.constant(vals.clone(), &[vals.len()]).unwrap();
        let lse = tape.logsumexp(x).unwrap();
        let got = tape.value(lse);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(got >= max);
        prop_assert!(got <= max + (vals.len() as f64).ln() + 1e-12);
    }
}

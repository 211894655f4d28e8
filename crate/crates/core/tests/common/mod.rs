//! Shared helpers for the integration tests: a finite-difference oracle and
//! a guarded relative error.

use seqtag_core::tensor::{Tape, TensorId};

/// Central finite differences over every element of `params`, re-running `f`
/// to rebuild the graph from scratch for each probe.
pub fn finite_diff(
    tape: &mut Tape,
    params: &[TensorId],
    mark: usize,
    eps: f64,
    mut f: impl FnMut(&mut Tape) -> TensorId,
) -> Vec<Vec<f64>> {
    let mut grads = Vec::new();
    for &p in params {
        let n = tape.numel(p);
        let mut g = vec![0.0; n];
        for (i, slot) in g.iter_mut().enumerate() {
            let orig = tape.data(p)[i];
            tape.data_mut(p)[i] = orig + eps;
            tape.truncate(mark);
            let out = f(tape);
            let plus = tape.value(out);
            tape.data_mut(p)[i] = orig - eps;
            tape.truncate(mark);
            let out = f(tape);
            let minus = tape.value(out);
            tape.data_mut(p)[i] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        tape.truncate(mark);
        grads.push(g);
    }
    grads
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

pub fn assert_grads_close(tape: &Tape, params: &[TensorId], fd: &[Vec<f64>], tol: f64) {
    for (&p, fd_g) in params.iter().zip(fd) {
        let got = tape.grad(p).expect("gradient not populated");
        for (i, (g, e)) in got.iter().zip(fd_g).enumerate() {
            assert!(
                rel_err(*g, *e) <= tol,
                "param {p:?} element {i}: autograd {g} vs finite-diff {e}"
            );
        }
    }
}

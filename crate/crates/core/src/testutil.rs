//! Helpers shared by unit tests: a finite-difference oracle and a guarded
//! relative error. Test-only; compiled out of release builds.

use crate::tensor::{Tape, TensorId};

/// Central finite differences over every element of `params`, re-running `f`
/// to rebuild the graph from scratch for each probe. Independent of the
/// backward pass it is used to check.
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

/// |a - b| / max(|a|, |b|, 1e-6); the floor keeps near-zero gradients from
/// blowing up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Asserts that autograd gradients of `params` match `fd` elementwise.
pub fn assert_grads_close(tape: &Tape, params: &[TensorId], fd: &[Vec<f64>], tol: f64) {
    for (&p, fd_g) in params.iter().zip(fd) {
        let got = tape.grad(p).expect("gradient not populated");
        for (i, (g, e)) in got.iter().zip(fd_g).enumerate() {
            assert!(
                rel_err(*g, *e) <= tol,
                "param {:?} element {i}: autograd {g} vs finite-diff {e}",
                p
            );
        }
    }
}

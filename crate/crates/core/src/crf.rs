//! Neural linear-chain CRF: sequence scoring, exact log-partition via the
//! forward algorithm in log space, log-likelihood and confidence-penalized
//! losses, and Viterbi decoding.
//!
//! A sequence score is start[y0] + sum_t em[t, y_t] + sum_{t>=1}
//! A[y_{t-1}, y_t] + stop[y_{T-1}]. The Viterbi recursion accumulates scores
//! in exactly that grouping, so a brute-force enumeration that adds terms in
//! the same order reproduces the decoded score bit for bit.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Transition table, boundary scores, and the emission projection.
/// `transitions[i][j]` is the score of label `j` following label `i`.
#[derive(Debug, Clone, Copy)]
pub struct CrfParams {
    pub transitions: TensorId,
    pub start: TensorId,
    pub stop: TensorId,
    pub proj_w: TensorId,
    pub proj_b: TensorId,
    pub num_labels: usize,
}

impl CrfParams {
    pub fn zeros(tape: &mut Tape, num_labels: usize, enc_dim: usize) -> Result<Self> {
        let k = num_labels;
        Ok(CrfParams {
            transitions: tape.param(vec![0.0; k * k], &[k, k])?,
            start: tape.param(vec![0.0; k], &[k])?,
            stop: tape.param(vec![0.0; k], &[k])?,
            proj_w: tape.param(vec![0.0; k * enc_dim], &[k, enc_dim])?,
            proj_b: tape.param(vec![0.0; k], &[k])?,
            num_labels,
        })
    }

    pub fn init(tape: &mut Tape, num_labels: usize, enc_dim: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let mut crf = Self::zeros(tape, num_labels, enc_dim)?;
        crf.randomize(tape, rng);
        Ok(crf)
    }

    /// Projection weights uniform in [-sqrt(1/enc_dim), sqrt(1/enc_dim)];
    /// transitions, boundary scores, and bias start at zero.
    pub fn randomize(&mut self, tape: &mut Tape, rng: &mut dyn RngCore) {
        let enc_dim = tape.shape(self.proj_w)[1];
        let bound = (1.0 / enc_dim as f64).sqrt();
        for v in tape.data_mut(self.proj_w) {
            *v = rng.random_range(-bound..=bound);
        }
        for &id in &[self.transitions, self.start, self.stop, self.proj_b] {
            tape.data_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Per-token, per-label scores (a T x K tensor on the tape).
#[derive(Debug, Clone, Copy)]
pub struct Emissions {
    pub scores: TensorId,
    pub steps: usize,
    pub labels: usize,
}

impl Emissions {
    /// Wraps an existing T x K tensor.
    pub fn from_tensor(tape: &Tape, scores: TensorId) -> Result<Self> {
        match tape.shape(scores) {
            [t, k] => Ok(Emissions {
                scores,
                steps: *t,
                labels: *k,
            }),
            s => Err(Error::Dimension {
                op: "emissions",
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }
}

/// Projects encoder output (T x 2H) to emission scores: em[t] = W enc[t] + b.
pub fn emissions_from_encoding(tape: &mut Tape, crf: &CrfParams, enc: TensorId) -> Result<Emissions> {
    let (t_len, width) = match tape.shape(enc) {
        [t, w] => (*t, *w),
        s => {
            return Err(Error::Dimension {
                op: "emissions_from_encoding",
                left: s.to_vec(),
                right: tape.shape(crf.proj_w).to_vec(),
            })
        }
    };
    if tape.shape(crf.proj_w)[1] != width {
        return Err(Error::Dimension {
            op: "emissions_from_encoding",
            left: tape.shape(enc).to_vec(),
            right: tape.shape(crf.proj_w).to_vec(),
        });
    }
    let mut rows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = tape.row(enc, t)?;
        let wx = tape.matvec(crf.proj_w, x)?;
        rows.push(tape.add(wx, crf.proj_b)?);
    }
    let scores = tape.stack_rows(&rows)?;
    Ok(Emissions {
        scores,
        steps: t_len,
        labels: crf.num_labels,
    })
}

fn check_labels(labels: &[usize], steps: usize, k: usize) -> Result<()> {
    if labels.len() != steps {
        return Err(Error::Argument(format!(
            "label sequence length {} does not match {} timesteps",
            labels.len(),
            steps
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {k} labels"
        )));
    }
    Ok(())
}

/// Differentiable score of one label sequence.
pub fn score_sequence(tape: &mut Tape, crf: &CrfParams, em: &Emissions, labels: &[usize]) -> Result<TensorId> {
    check_labels(labels, em.steps, crf.num_labels)?;
    let e0 = tape.row(em.scores, 0)?;
    let s0 = tape.elem(crf.start, labels[0])?;
    let e00 = tape.elem(e0, labels[0])?;
    let mut score = tape.add(s0, e00)?;
    for t in 1..em.steps {
        let arow = tape.row(crf.transitions, labels[t - 1])?;
        let a = tape.elem(arow, labels[t])?;
        score = tape.add(score, a)?;
        let erow = tape.row(em.scores, t)?;
        let e = tape.elem(erow, labels[t])?;
        score = tape.add(score, e)?;
    }
    let stop = tape.elem(crf.stop, labels[em.steps - 1])?;
    tape.add(score, stop)
}

/// log sum over all K^T label sequences of exp(score), by the forward
/// recursion alpha_t[j] = em[t, j] + logsumexp_i(alpha_{t-1}[i] + A[i, j]).
pub fn log_partition(tape: &mut Tape, crf: &CrfParams, em: &Emissions) -> Result<TensorId> {
    let e0 = tape.row(em.scores, 0)?;
    let mut alpha = tape.add(crf.start, e0)?;
    for t in 1..em.steps {
        let m = tape.add_col_broadcast(crf.transitions, alpha)?;
        let reduced = tape.logsumexp_cols(m)?;
        let et = tape.row(em.scores, t)?;
        alpha = tape.add(reduced, et)?;
    }
    let terminal = tape.add(alpha, crf.stop)?;
    tape.logsumexp(terminal)
}

/// log Pr(gold | sentence) = score(gold) - log Z; always <= 0.
pub fn log_likelihood(tape: &mut Tape, crf: &CrfParams, em: &Emissions, gold: &[usize]) -> Result<TensorId> {
    let score = score_sequence(tape, crf, em, gold)?;
    let log_z = log_partition(tape, crf, em)?;
    tape.sub(score, log_z)
}

/// Minimization objective -(L + beta * (-P log P)) where L is the gold
/// log-likelihood and P = exp(L). The entropy term reuses the single
/// differentiable log-likelihood value, so no second partition pass runs and
/// gradients flow through both occurrences of P. At beta = 0 this returns
/// exactly -L.
pub fn penalized_loss(tape: &mut Tape, crf: &CrfParams, em: &Emissions, gold: &[usize], beta: f64) -> Result<TensorId> {
    if beta < 0.0 {
        return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
    }
    let ll = log_likelihood(tape, crf, em, gold)?;
    if beta == 0.0 {
        return Ok(tape.neg(ll));
    }
    let p = tape.exp(ll);
    let p_log_p = tape.mul(p, ll)?;
    let entropy = tape.neg(p_log_p);
    let weighted = tape.scale(entropy, beta);
    let inner = tape.add(ll, weighted)?;
    Ok(tape.neg(inner))
}

/// Max-scoring label sequence and its score. Ties break toward the lowest
/// label index at every max. Runs on plain values; nothing is recorded.
pub fn viterbi_decode(tape: &Tape, crf: &CrfParams, em: &Emissions) -> Result<(Vec<usize>, f64)> {
    let (t_len, k) = (em.steps, em.labels);
    if t_len == 0 {
        return Err(Error::Argument("cannot decode an empty sequence".into()));
    }
    let scores = tape.data(em.scores);
    let trans = tape.data(crf.transitions);
    let start = tape.data(crf.start);
    let stop = tape.data(crf.stop);

    let mut delta: Vec<f64> = (0..k).map(|j| start[j] + scores[j]).collect();
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(t_len);
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; k];
        let mut bp = vec![0usize; k];
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for (i, &d) in delta.iter().enumerate() {
                let cand = d + trans[i * k + j];
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            next[j] = best + scores[t * k + j];
            bp[j] = arg;
        }
        delta = next;
        backptr.push(bp);
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for j in 0..k {
        let cand = delta[j] + stop[j];
        if cand > best {
            best = cand;
            last = j;
        }
    }

    let mut labels = vec![0usize; t_len];
    labels[t_len - 1] = last;
    for t in (1..t_len).rev() {
        last = backptr[t - 1][last];
        labels[t - 1] = last;
    }
    Ok((labels, best))
}

//! LSTM cell with packed gates and optional zoneout regularization.
//!
//! Gate preactivations are packed into one matrix-vector product in the fixed
//! order i, f, o, g. Zoneout draws per-unit Bernoulli masks each timestep and
//! carries the previous cell/hidden state through the masked units unchanged;
//! the masks are constants on the tape, so gradients flow through both the
//! kept and the updated branch but never through the mask itself.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Whether stochastic regularizers sample masks or use their expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Zoneout keep-probabilities for the cell and hidden state.
#[derive(Debug, Clone, Copy)]
pub struct ZoneoutConfig {
    pub zc: f64,
    pub zh: f64,
    pub mode: Mode,
}

impl ZoneoutConfig {
    pub fn new(zc: f64, zh: f64, mode: Mode) -> Result<Self> {
        if !(0.0..=1.0).contains(&zc) || !(0.0..=1.0).contains(&zh) {
            return Err(Error::Config(format!(
                "zoneout probabilities must lie in [0, 1], got zc={zc}, zh={zh}"
            )));
        }
        Ok(ZoneoutConfig { zc, zh, mode })
    }

    pub fn train(zc: f64, zh: f64) -> Result<Self> {
        Self::new(zc, zh, Mode::Train)
    }

    pub fn eval(zc: f64, zh: f64) -> Result<Self> {
        Self::new(zc, zh, Mode::Eval)
    }

    /// No zoneout at all; equivalent to the vanilla LSTM step.
    pub fn disabled() -> Self {
        ZoneoutConfig {
            zc: 0.0,
            zh: 0.0,
            mode: Mode::Eval,
        }
    }
}

/// One LSTM direction. `w_x` is 4H x D, `w_h` is 4H x H, `b` is 4H, with the
/// gate slices ordered i, f, o, g.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_x: TensorId,
    pub w_h: TensorId,
    pub b: TensorId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmCell {
    /// Weights uniform in [-sqrt(1/H), sqrt(1/H)], biases zero except the
    /// forget-gate slice, which starts at 1.0.
    pub fn init(tape: &mut Tape, input_size: usize, hidden_size: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let mut cell = Self::zeros(tape, input_size, hidden_size)?;
        cell.randomize(tape, rng);
        Ok(cell)
    }

    /// All-zero parameters (forget bias included); used when parameters are
    /// filled in afterwards from a model file or by `randomize`.
    pub fn zeros(tape: &mut Tape, input_size: usize, hidden_size: usize) -> Result<Self> {
        let h4 = 4 * hidden_size;
        let w_x = tape.param(vec![0.0; h4 * input_size], &[h4, input_size])?;
        let w_h = tape.param(vec![0.0; h4 * hidden_size], &[h4, hidden_size])?;
        let b = tape.param(vec![0.0; h4], &[h4])?;
        Ok(LstmCell {
            w_x,
            w_h,
            b,
            input_size,
            hidden_size,
        })
    }

    /// Redraws the weights in place (draw order: `w_x` then `w_h`) and resets
    /// the bias to zero with the forget slice at 1.0.
    pub fn randomize(&mut self, tape: &mut Tape, rng: &mut dyn RngCore) {
        let h = self.hidden_size;
        let bound = (1.0 / h as f64).sqrt();
        for &w in &[self.w_x, self.w_h] {
            for v in tape.data_mut(w) {
                *v = rng.random_range(-bound..=bound);
            }
        }
        let b = tape.data_mut(self.b);
        b.iter_mut().for_each(|v| *v = 0.0);
        b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
    }

    fn check_shapes(&self, tape: &Tape, x: TensorId, h_prev: TensorId, c_prev: TensorId) -> Result<()> {
        let want_x = [self.input_size];
        let want_h = [self.hidden_size];
        for (id, want) in [(x, &want_x[..]), (h_prev, &want_h[..]), (c_prev, &want_h[..])] {
            if tape.shape(id) != want {
                return Err(Error::Dimension {
                    op: "lstm_step",
                    left: want.to_vec(),
                    right: tape.shape(id).to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Gate activations (i, f, o, g) for one timestep.
    fn gates(&self, tape: &mut Tape, x: TensorId, h_prev: TensorId) -> Result<(TensorId, TensorId, TensorId, TensorId)> {
        let h = self.hidden_size;
        let mx = tape.matvec(self.w_x, x)?;
        let mh = tape.matvec(self.w_h, h_prev)?;
        let lin = tape.add(mx, mh)?;
        let pre = tape.add(lin, self.b)?;
        let pi = tape.slice(pre, 0, h)?;
        let pf = tape.slice(pre, h, h)?;
        let po = tape.slice(pre, 2 * h, h)?;
        let pg = tape.slice(pre, 3 * h, h)?;
        Ok((tape.sigmoid(pi), tape.sigmoid(pf), tape.sigmoid(po), tape.tanh(pg)))
    }

    /// Vanilla recurrence: c_t = f * c_{t-1} + i * g, h_t = o * tanh(c_t).
    pub fn step(&self, tape: &mut Tape, x: TensorId, h_prev: TensorId, c_prev: TensorId) -> Result<(TensorId, TensorId)> {
        self.check_shapes(tape, x, h_prev, c_prev)?;
        let (i, f, o, g) = self.gates(tape, x, h_prev)?;
        let fc = tape.mul(f, c_prev)?;
        let ig = tape.mul(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    /// Zoneout recurrence. The candidate states are the vanilla updates
    /// c_hat = f * c_{t-1} + i * g and h_hat = o * tanh(c_hat); per-unit masks
    /// decide whether each unit keeps its previous state instead. In eval
    /// mode the masks are replaced by their expectation, deterministically:
    /// c_t = zc * c_{t-1} + (1 - zc) * c_hat (and likewise for h).
    pub fn step_zoneout(
        &self,
        tape: &mut Tape,
        zcfg: &ZoneoutConfig,
        x: TensorId,
        h_prev: TensorId,
        c_prev: TensorId,
        rng: &mut dyn RngCore,
    ) -> Result<(TensorId, TensorId)> {
        if !(0.0..=1.0).contains(&zcfg.zc) || !(0.0..=1.0).contains(&zcfg.zh) {
            return Err(Error::Config(format!(
                "zoneout probabilities must lie in [0, 1], got zc={}, zh={}",
                zcfg.zc, zcfg.zh
            )));
        }
        self.check_shapes(tape, x, h_prev, c_prev)?;
        let (i, f, o, g) = self.gates(tape, x, h_prev)?;
        let fc = tape.mul(f, c_prev)?;
        let ig = tape.mul(i, g)?;
        let c_hat = tape.add(fc, ig)?;
        let c = self.mix(tape, zcfg.zc, zcfg.mode, c_prev, c_hat, rng)?;
        let tc = tape.tanh(c_hat);
        let h_hat = tape.mul(o, tc)?;
        let h = self.mix(tape, zcfg.zh, zcfg.mode, h_prev, h_hat, rng)?;
        Ok((h, c))
    }

    /// d * prev + (1 - d) * cand with d either sampled (train) or equal to
    /// the keep-probability (eval). The degenerate probabilities 0 and 1
    /// return the candidate or previous tensor unchanged, consuming no
    /// randomness, so zoneout with zc = zh = 0 is bit-identical to `step`.
    fn mix(
        &self,
        tape: &mut Tape,
        keep: f64,
        mode: Mode,
        prev: TensorId,
        cand: TensorId,
        rng: &mut dyn RngCore,
    ) -> Result<TensorId> {
        if keep == 0.0 {
            return Ok(cand);
        }
        if keep == 1.0 {
            return Ok(prev);
        }
        match mode {
            Mode::Train => {
                let h = self.hidden_size;
                let mut mask = vec![0.0; h];
                let mut inv = vec![0.0; h];
                for j in 0..h {
                    let keep_unit = rng.random::<f64>() < keep;
                    mask[j] = if keep_unit { 1.0 } else { 0.0 };
                    inv[j] = 1.0 - mask[j];
                }
                let d = tape.constant(mask, &[h])?;
                let d_inv = tape.constant(inv, &[h])?;
                let kept = tape.mul(d, prev)?;
                let updated = tape.mul(d_inv, cand)?;
                tape.add(kept, updated)
            }
            Mode::Eval => {
                let kept = tape.scale(prev, keep);
                let updated = tape.scale(cand, 1.0 - keep);
                tape.add(kept, updated)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CountingRng;
    use crate::testutil::{assert_grads_close, finite_diff};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_state(tape: &mut Tape, h: usize) -> (TensorId, TensorId) {
        (tape.zeros(&[h], false), tape.zeros(&[h], false))
    }

    #[test]
    fn all_zero_parameters_give_half_gates_and_zero_state() {
        let mut tape = Tape::new();
        let cell = LstmCell::zeros(&mut tape, 2, 3).unwrap();
        let x = tape.constant(vec![0.7, -0.3], &[2]).unwrap();
        let (h0, c0) = zero_state(&mut tape, 3);
        let (h, c) = cell.step(&mut tape, x, h0, c0).unwrap();
        assert_eq!(tape.data(c), &[0.0; 3]);
        assert_eq!(tape.data(h), &[0.0; 3]);
    }

    #[test]
    fn zero_weights_with_unit_cell_state() {
        let mut tape = Tape::new();
        let cell = LstmCell::zeros(&mut tape, 1, 1).unwrap();
        let x = tape.constant(vec![0.0], &[1]).unwrap();
        let h0 = tape.zeros(&[1], false);
        let c0 = tape.constant(vec![1.0], &[1]).unwrap();
        let (h, c) = cell.step(&mut tape, x, h0, c0).unwrap();
        assert_relative_eq!(tape.data(c)[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(tape.data(h)[0], 0.5 * 0.5_f64.tanh(), epsilon = 1e-6);
        assert_relative_eq!(tape.data(h)[0], 0.231059, epsilon = 1e-6);
    }

    #[test]
    fn unrolled_gradients_match_finite_differences() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cell = LstmCell::init(&mut tape, 2, 3, &mut rng).unwrap();
        let xs: Vec<TensorId> = (0..3)
            .map(|t| {
                tape.constant(vec![0.3 * (t as f64 + 1.0), -0.5 + 0.2 * t as f64], &[2])
                    .unwrap()
            })
            .collect();
        let mark = tape.len();
        let params = [cell.w_x, cell.w_h, cell.b];
        let f = |tp: &mut Tape| {
            let (mut h, mut c) = (tp.zeros(&[3], false), tp.zeros(&[3], false));
            for &x in &xs {
                let (nh, nc) = cell.step(tp, x, h, c).unwrap();
                h = nh;
                c = nc;
            }
            tp.sum(h)
        };
        let fd = finite_diff(&mut tape, &params, mark, 1e-5, &f);
        tape.truncate(mark);
        let loss = f(&mut tape);
        tape.backward(loss).unwrap();
        assert_grads_close(&tape, &params, &fd, 1e-4);
    }

    #[test]
    fn zoneout_zero_is_bit_identical_to_plain_step() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::init(&mut tape, 2, 4, &mut rng).unwrap();
        let x = tape.constant(vec![0.9, -1.1], &[2]).unwrap();
        let h0 = tape.constant(vec![0.1, -0.2, 0.3, 0.0], &[4]).unwrap();
        let c0 = tape.constant(vec![-0.4, 0.5, 0.0, 1.2], &[4]).unwrap();
        let (h_a, c_a) = cell.step(&mut tape, x, h0, c0).unwrap();
        let zcfg = ZoneoutConfig::train(0.0, 0.0).unwrap();
        let mut counting = CountingRng::seed_from_u64(0);
        let (h_b, c_b) = cell
            .step_zoneout(&mut tape, &zcfg, x, h0, c0, &mut counting)
            .unwrap();
        assert_eq!(tape.data(h_a), tape.data(h_b));
        assert_eq!(tape.data(c_a), tape.data(c_b));
        assert_eq!(counting.draws(), 0);
    }

    #[test]
    fn zoneout_one_passes_state_through() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = LstmCell::init(&mut tape, 2, 3, &mut rng).unwrap();
        let x = tape.constant(vec![0.2, 0.4], &[2]).unwrap();
        let h0 = tape.constant(vec![0.5, -0.5, 0.25], &[3]).unwrap();
        let c0 = tape.constant(vec![1.0, 2.0, -3.0], &[3]).unwrap();
        let zcfg = ZoneoutConfig::train(1.0, 1.0).unwrap();
        let (h, c) = cell
            .step_zoneout(&mut tape, &zcfg, x, h0, c0, &mut rng)
            .unwrap();
        assert_eq!(h, h0);
        assert_eq!(c, c0);
    }

    #[test]
    fn zoneout_probability_out_of_range_is_config_error() {
        assert!(matches!(
            ZoneoutConfig::train(1.5, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ZoneoutConfig::train(0.0, -0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zoneout_monte_carlo_mean_matches_expectation() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cell = LstmCell::init(&mut tape, 2, 3, &mut rng).unwrap();
        let x = tape.constant(vec![0.8, -0.6], &[2]).unwrap();
        let h0 = tape.constant(vec![0.3, -0.4, 0.1], &[3]).unwrap();
        let c0 = tape.constant(vec![1.5, -0.9, 0.7], &[3]).unwrap();

        // deterministic candidate from the vanilla step
        let (_, c_hat) = cell.step(&mut tape, x, h0, c0).unwrap();
        let c_hat: Vec<f64> = tape.data(c_hat).to_vec();
        let c_prev: Vec<f64> = tape.data(c0).to_vec();

        let zcfg = ZoneoutConfig::train(0.5, 0.5).unwrap();
        let mark = tape.len();
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let (_, c) = cell
                .step_zoneout(&mut tape, &zcfg, x, h0, c0, &mut rng)
                .unwrap();
            for (s, v) in sums.iter_mut().zip(tape.data(c)) {
                *s += v;
            }
            tape.truncate(mark);
        }
        for j in 0..3 {
            let mean = sums[j] / n as f64;
            let expect = 0.5 * c_prev[j] + 0.5 * c_hat[j];
            let sd = 0.5 * (c_prev[j] - c_hat[j]).abs();
            let se = sd / (n as f64).sqrt();
            assert!(
                (mean - expect).abs() <= 3.0 * se,
                "unit {j}: mean {mean} vs {expect} (3se = {})",
                3.0 * se
            );
        }

        // eval mode reproduces the expectation exactly and draws nothing
        let zeval = ZoneoutConfig::eval(0.5, 0.5).unwrap();
        let mut counting = CountingRng::seed_from_u64(0);
        let (_, c_eval) = cell
            .step_zoneout(&mut tape, &zeval, x, h0, c0, &mut counting)
            .unwrap();
        for j in 0..3 {
            assert_relative_eq!(
                tape.data(c_eval)[j],
                0.5 * c_prev[j] + 0.5 * c_hat[j],
                max_relative = 1e-15
            );
        }
        assert_eq!(counting.draws(), 0);
    }

    #[test]
    fn zoneout_gradients_match_finite_differences_with_frozen_masks() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cell = LstmCell::init(&mut tape, 2, 3, &mut rng).unwrap();
        let x = tape.constant(vec![0.5, -0.7], &[2]).unwrap();
        let h0 = tape.constant(vec![0.2, 0.1, -0.3], &[3]).unwrap();
        let c0 = tape.constant(vec![0.6, -0.2, 0.9], &[3]).unwrap();
        let zcfg = ZoneoutConfig::train(0.4, 0.3).unwrap();
        let mark = tape.len();
        let params = [cell.w_x, cell.w_h, cell.b];
        let f = |tp: &mut Tape| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
            let (h, c) = cell
                .step_zoneout(tp, &zcfg, x, h0, c0, &mut mask_rng)
                .unwrap();
            let hc = tp.add(h, c).unwrap();
            tp.sum(hc)
        };
        let fd = finite_diff(&mut tape, &params, mark, 1e-5, &f);
        tape.truncate(mark);
        let loss = f(&mut tape);
        tape.backward(loss).unwrap();
        assert_grads_close(&tape, &params, &fd, 1e-4);
    }
}

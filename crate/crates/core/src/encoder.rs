//! Per-token representations: word embeddings, character biLSTM embeddings,
//! and optional auxiliary vectors, fed through a stack of three bidirectional
//! LSTMs with residual connections from layer 2 on (layer 1 cannot be
//! residual because its input width differs from 2H).
//!
//! Zoneout applies to the three stacked layers only; the character LSTM is
//! treated as an embedding function and always runs the vanilla step.

use rand::{Rng, RngCore};

use crate::data::{Sentence, Vocab};
use crate::error::{Error, Result};
use crate::lstm::{LstmCell, ZoneoutConfig};
use crate::tensor::{Tape, TensorId};

/// A forward/backward LSTM pair over one layer.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstm {
    pub fn zeros(tape: &mut Tape, input_size: usize, hidden_size: usize) -> Result<Self> {
        Ok(BiLstm {
            fwd: LstmCell::zeros(tape, input_size, hidden_size)?,
            bwd: LstmCell::zeros(tape, input_size, hidden_size)?,
        })
    }

    pub fn randomize(&mut self, tape: &mut Tape, rng: &mut dyn RngCore) {
        self.fwd.randomize(tape, rng);
        self.bwd.randomize(tape, rng);
    }

    /// Runs both directions over the sequence and concatenates the hidden
    /// states per position (forward half first). Zoneout masks are drawn for
    /// the forward direction first (t = 0..T), then the backward direction
    /// (t = T..0).
    pub fn run(
        &self,
        tape: &mut Tape,
        inputs: &[TensorId],
        zcfg: &ZoneoutConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TensorId>> {
        let h = self.fwd.hidden_size;
        let mut forward = Vec::with_capacity(inputs.len());
        let (mut hs, mut cs) = (tape.zeros(&[h], false), tape.zeros(&[h], false));
        for &x in inputs {
            let (nh, nc) = self.fwd.step_zoneout(tape, zcfg, x, hs, cs, rng)?;
            forward.push(nh);
            hs = nh;
            cs = nc;
        }
        let mut backward = vec![None; inputs.len()];
        let (mut hs, mut cs) = (tape.zeros(&[h], false), tape.zeros(&[h], false));
        for (t, &x) in inputs.iter().enumerate().rev() {
            let (nh, nc) = self.bwd.step_zoneout(tape, zcfg, x, hs, cs, rng)?;
            backward[t] = Some(nh);
            hs = nh;
            cs = nc;
        }
        inputs
            .iter()
            .enumerate()
            .map(|(t, _)| tape.concat(&[forward[t], backward[t].expect("filled above")]))
            .collect()
    }
}

/// Embedding tables, the character biLSTM, and the three stacked layers.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub word_table: TensorId,
    pub char_table: TensorId,
    pub char_fwd: LstmCell,
    pub char_bwd: LstmCell,
    pub layers: Vec<BiLstm>,
    pub word_dim: usize,
    pub char_dim: usize,
    pub hidden: usize,
    pub aux_dim: usize,
}

impl EncoderParams {
    /// Layer 1 consumes word_dim + 2*char_dim + aux_dim; layers 2 and 3
    /// consume the 2*hidden output of the layer below.
    pub fn zeros(
        tape: &mut Tape,
        vocab_size: usize,
        char_vocab_size: usize,
        word_dim: usize,
        char_dim: usize,
        hidden: usize,
        aux_dim: usize,
    ) -> Result<Self> {
        let word_table = tape.param(vec![0.0; vocab_size * word_dim], &[vocab_size, word_dim])?;
        let char_table = tape.param(vec![0.0; char_vocab_size * char_dim], &[char_vocab_size, char_dim])?;
        let char_fwd = LstmCell::zeros(tape, char_dim, char_dim)?;
        let char_bwd = LstmCell::zeros(tape, char_dim, char_dim)?;
        let rep_dim = word_dim + 2 * char_dim + aux_dim;
        let layers = vec![
            BiLstm::zeros(tape, rep_dim, hidden)?,
            BiLstm::zeros(tape, 2 * hidden, hidden)?,
            BiLstm::zeros(tape, 2 * hidden, hidden)?,
        ];
        Ok(EncoderParams {
            word_table,
            char_table,
            char_fwd,
            char_bwd,
            layers,
            word_dim,
            char_dim,
            hidden,
            aux_dim,
        })
    }

    /// Fills parameters in place. The word table rows are supplied by the
    /// caller (pretrained rows plus seeded draws); the character table rows
    /// are drawn uniform in [-0.25, 0.25] with a zero `<pad>` row, then the
    /// cells are randomized in a fixed order: char forward, char backward,
    /// then each stacked layer.
    pub fn randomize(&mut self, tape: &mut Tape, word_table: &[f64], rng: &mut dyn RngCore) -> Result<()> {
        let dst = tape.data_mut(self.word_table);
        if dst.len() != word_table.len() {
            return Err(Error::Argument(format!(
                "word table has {} values, expected {}",
                word_table.len(),
                dst.len()
            )));
        }
        dst.copy_from_slice(word_table);
        let chars = tape.data_mut(self.char_table);
        for v in chars.iter_mut() {
            *v = rng.random_range(-0.25..=0.25);
        }
        let pad_row = self.char_dim.min(chars.len());
        chars[..pad_row].iter_mut().for_each(|v| *v = 0.0);
        self.char_fwd.randomize(tape, rng);
        self.char_bwd.randomize(tape, rng);
        for layer in &mut self.layers {
            layer.randomize(tape, rng);
        }
        Ok(())
    }

    /// Character biLSTM embedding of one token: the final forward state
    /// concatenated with the final backward state.
    fn char_embedding(&self, tape: &mut Tape, char_ids: &[usize]) -> Result<(TensorId, TensorId)> {
        let char_rows = tape.shape(self.char_table)[0];
        let embeds: Vec<TensorId> = char_ids
            .iter()
            .map(|&cid| {
                if cid >= char_rows {
                    return Err(Error::Data(format!(
                        "character index {cid} outside table of {char_rows} rows"
                    )));
                }
                tape.row(self.char_table, cid)
            })
            .collect::<Result<_>>()?;
        let d = self.char_dim;
        let (mut hf, mut cf) = (tape.zeros(&[d], false), tape.zeros(&[d], false));
        for &x in &embeds {
            let (nh, nc) = self.char_fwd.step(tape, x, hf, cf)?;
            hf = nh;
            cf = nc;
        }
        let (mut hb, mut cb) = (tape.zeros(&[d], false), tape.zeros(&[d], false));
        for &x in embeds.iter().rev() {
            let (nh, nc) = self.char_bwd.step(tape, x, hb, cb)?;
            hb = nh;
            cb = nc;
        }
        Ok((hf, hb))
    }

    /// Layer inputs: concat(word embedding, char forward state, char backward
    /// state, auxiliary vector if configured), one per token.
    pub fn token_representations(&self, tape: &mut Tape, sentence: &Sentence) -> Result<Vec<TensorId>> {
        if sentence.is_empty() {
            return Err(Error::Data("cannot encode an empty sentence".into()));
        }
        let vocab_rows = tape.shape(self.word_table)[0];
        let mut reps = Vec::with_capacity(sentence.len());
        for t in 0..sentence.len() {
            let wid = sentence.word_ids[t];
            if wid >= vocab_rows {
                return Err(Error::Data(format!(
                    "token index {wid} outside vocabulary of {vocab_rows} rows (no <unk> mapping applied?)"
                )));
            }
            let word = tape.row(self.word_table, wid)?;
            let char_ids: Vec<usize> = if sentence.char_ids[t].is_empty() {
                vec![Vocab::UNK]
            } else {
                sentence.char_ids[t].clone()
            };
            let (hf, hb) = self.char_embedding(tape, &char_ids)?;
            let mut parts = vec![word, hf, hb];
            if self.aux_dim > 0 {
                let aux = sentence
                    .aux
                    .as_ref()
                    .and_then(|a| a.get(t))
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "encoder expects {}-dimensional auxiliary vectors but token {t} has none",
                            self.aux_dim
                        ))
                    })?;
                if aux.len() != self.aux_dim {
                    return Err(Error::Data(format!(
                        "auxiliary vector of width {} does not match configured aux_dim {}",
                        aux.len(),
                        self.aux_dim
                    )));
                }
                parts.push(tape.constant(aux.clone(), &[self.aux_dim])?);
            }
            reps.push(tape.concat(&parts)?);
        }
        Ok(reps)
    }

    /// Encodes a sentence into a T x 2H matrix: layer 1 over the token
    /// representations, then layers 2 and 3 with residual connections
    /// (output = biLSTM(input) + input).
    pub fn encode_tokens(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        zcfg: &ZoneoutConfig,
        rng: &mut dyn RngCore,
    ) -> Result<TensorId> {
        let reps = self.token_representations(tape, sentence)?;
        let mut seq = self.layers[0].run(tape, &reps, zcfg, rng)?;
        for layer in &self.layers[1..] {
            let out = layer.run(tape, &seq, zcfg, rng)?;
            seq = out
                .iter()
                .zip(&seq)
                .map(|(&o, &s)| tape.add(o, s))
                .collect::<Result<_>>()?;
        }
        tape.stack_rows(&seq)
    }
}

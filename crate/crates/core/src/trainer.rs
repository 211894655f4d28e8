//! Training orchestration: seeded shuffling, per-sentence updates, dev-set
//! model selection with early stopping, and checkpointing.
//!
//! All randomness derives from one master generator seeded by the config, in
//! a fixed draw order: word-table initialization, the optimizer noise-stream
//! seed, the remaining parameter initialization, then per-epoch shuffles and
//! per-step zoneout masks. Gradient noise is drawn from the derived optimizer
//! stream, so a whole run is reproducible from the single config seed.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::crf::{self, CrfParams};
use crate::data::{self, Embeddings, LabelSet, RawSentence, Scheme, Sentence, Vocab};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::eval;
use crate::lstm::ZoneoutConfig;
use crate::optim::Sgd;
use crate::rng::CountingRng;
use crate::tensor::{Tape, TensorId};

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub patience: usize,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub zc: f64,
    pub zh: f64,
    pub hidden: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub seed: u64,
    pub clip: Option<f64>,
    pub lowercase: bool,
    pub scheme: Scheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            momentum: 0.9,
            epochs: 50,
            patience: 10,
            beta: 0.0,
            eta: 0.0,
            gamma: 0.55,
            zc: 0.0,
            zh: 0.0,
            hidden: 100,
            word_dim: 100,
            char_dim: 25,
            seed: 1,
            clip: None,
            lowercase: true,
            scheme: Scheme::Iob2,
        }
    }
}

const BETA_GRID: [f64; 4] = [0.0, 0.1, 1.0, 2.0];
const ETA_GRID: [f64; 4] = [0.0, 0.01, 0.3, 1.0];
const ZONEOUT_GRID: [(f64, f64); 3] = [(0.0, 0.0), (0.15, 0.15), (0.5, 0.05)];

impl TrainConfig {
    /// Rejects invalid settings; returns warnings for legal values outside
    /// the evaluated hyperparameter grid.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.eta < 0.0 {
            return Err(Error::Config(format!("eta must be non-negative, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.zc) || !(0.0..=1.0).contains(&self.zh) {
            return Err(Error::Config(format!(
                "zoneout probabilities must lie in [0, 1], got zc={}, zh={}",
                self.zc, self.zh
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.hidden == 0 || self.word_dim == 0 || self.char_dim == 0 {
            return Err(Error::Config(
                "hidden, word_dim, and char_dim must all be positive".into(),
            ));
        }
        if let Some(clip) = self.clip {
            if clip <= 0.0 {
                return Err(Error::Config(format!("clip must be positive, got {clip}")));
            }
        }
        let mut warnings = Vec::new();
        if !BETA_GRID.contains(&self.beta) {
            warnings.push(format!(
                "beta={} is outside the evaluated grid {:?}",
                self.beta, BETA_GRID
            ));
        }
        if !ETA_GRID.contains(&self.eta) {
            warnings.push(format!(
                "eta={} is outside the evaluated grid {:?}",
                self.eta, ETA_GRID
            ));
        }
        if !ZONEOUT_GRID.contains(&(self.zc, self.zh)) {
            warnings.push(format!(
                "(zc, zh)=({}, {}) is outside the evaluated grid {:?}",
                self.zc, self.zh, ZONEOUT_GRID
            ));
        }
        Ok(warnings)
    }
}

/// A live model: the parameter tape plus everything needed to run it.
#[derive(Debug)]
pub struct Model {
    pub tape: Tape,
    pub encoder: EncoderParams,
    pub crf: CrfParams,
    pub words: Vocab,
    pub chars: Vocab,
    pub labels: LabelSet,
    pub config: TrainConfig,
    pub aux_dim: usize,
    base: usize,
}

impl Model {
    /// Builds the parameter skeleton with all-zero values. Parameters occupy
    /// the tape prefix; everything recorded past `base` is transient.
    pub fn with_shapes(
        config: TrainConfig,
        words: Vocab,
        chars: Vocab,
        labels: LabelSet,
        aux_dim: usize,
    ) -> Result<Model> {
        let mut tape = Tape::new();
        let encoder = EncoderParams::zeros(
            &mut tape,
            words.len(),
            chars.len(),
            config.word_dim,
            config.char_dim,
            config.hidden,
            aux_dim,
        )?;
        let crf = CrfParams::zeros(&mut tape, labels.len(), 2 * config.hidden)?;
        let base = tape.len();
        Ok(Model {
            tape,
            encoder,
            crf,
            words,
            chars,
            labels,
            config,
            aux_dim,
            base,
        })
    }

    /// Seeded parameter initialization: the caller supplies pre-drawn word
    /// table rows; everything else draws from `rng` here.
    pub fn randomize(&mut self, word_table: &[f64], rng: &mut CountingRng) -> Result<()> {
        self.encoder.randomize(&mut self.tape, word_table, rng)?;
        self.crf.randomize(&mut self.tape, rng);
        Ok(())
    }

    /// Parameter tensors in their fixed serialization order.
    pub fn named_params(&self) -> Vec<(String, TensorId)> {
        let mut out = vec![
            ("word_table".to_string(), self.encoder.word_table),
            ("char_table".to_string(), self.encoder.char_table),
        ];
        let cells = [
            ("char_fwd", self.encoder.char_fwd),
            ("char_bwd", self.encoder.char_bwd),
        ];
        for (name, cell) in cells {
            out.push((format!("{name}.w_x"), cell.w_x));
            out.push((format!("{name}.w_h"), cell.w_h));
            out.push((format!("{name}.b"), cell.b));
        }
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            for (dir, cell) in [("fwd", layer.fwd), ("bwd", layer.bwd)] {
                out.push((format!("layer{}_{dir}.w_x", i + 1), cell.w_x));
                out.push((format!("layer{}_{dir}.w_h", i + 1), cell.w_h));
                out.push((format!("layer{}_{dir}.b", i + 1), cell.b));
            }
        }
        out.push(("crf.proj_w".to_string(), self.crf.proj_w));
        out.push(("crf.proj_b".to_string(), self.crf.proj_b));
        out.push(("crf.transitions".to_string(), self.crf.transitions));
        out.push(("crf.start".to_string(), self.crf.start));
        out.push(("crf.stop".to_string(), self.crf.stop));
        out
    }

    pub fn param_ids(&self) -> Vec<TensorId> {
        self.named_params().into_iter().map(|(_, id)| id).collect()
    }

    /// Named parameter blocks (name, shape, values) for serialization.
    pub fn export_params(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.named_params()
            .into_iter()
            .map(|(name, id)| {
                (
                    name,
                    self.tape.shape(id).to_vec(),
                    self.tape.data(id).to_vec(),
                )
            })
            .collect()
    }

    /// Loads serialized blocks back into the parameter tensors. Names, order,
    /// and shapes must match `named_params` exactly.
    pub fn load_params(&mut self, blocks: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let named = self.named_params();
        if blocks.len() != named.len() {
            return Err(Error::Incompatible(format!(
                "model file has {} parameter blocks, expected {}",
                blocks.len(),
                named.len()
            )));
        }
        for ((name, id), (bname, bshape, bdata)) in named.into_iter().zip(blocks) {
            if &name != bname {
                return Err(Error::Incompatible(format!(
                    "parameter block '{bname}' found where '{name}' was expected"
                )));
            }
            if self.tape.shape(id) != bshape.as_slice() {
                return Err(Error::Incompatible(format!(
                    "parameter '{name}' has shape {:?} in the file but {:?} in the model",
                    bshape,
                    self.tape.shape(id)
                )));
            }
            self.tape.data_mut(id).copy_from_slice(bdata);
        }
        Ok(())
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.param_ids()
            .into_iter()
            .map(|id| self.tape.data(id).to_vec())
            .collect()
    }

    fn restore(&mut self, snapshot: &[Vec<f64>]) {
        for (id, values) in self.param_ids().into_iter().zip(snapshot) {
            self.tape.data_mut(id).copy_from_slice(values);
        }
    }

    /// Builds the penalized loss for one sentence (train-mode zoneout). The
    /// caller runs backward/step and then truncates the tape to `base_len`.
    pub fn sentence_loss(
        &mut self,
        sentence: &Sentence,
        zcfg: &ZoneoutConfig,
        rng: &mut CountingRng,
    ) -> Result<TensorId> {
        let enc = self
            .encoder
            .encode_tokens(&mut self.tape, sentence, zcfg, rng)?;
        let em = crf::emissions_from_encoding(&mut self.tape, &self.crf, enc)?;
        crf::penalized_loss(
            &mut self.tape,
            &self.crf,
            &em,
            &sentence.gold_labels,
            self.config.beta,
        )
    }

    /// Tape length that marks the parameter-only prefix.
    pub fn base_len(&self) -> usize {
        self.base
    }

    /// Eval-mode Viterbi labels for one sentence. Consumes no randomness and
    /// leaves the tape as it found it.
    pub fn predict_sentence(&mut self, sentence: &Sentence) -> Result<Vec<usize>> {
        let mark = self.tape.len();
        let zcfg = ZoneoutConfig::eval(self.config.zc, self.config.zh)?;
        let mut silent = CountingRng::seed_from_u64(0);
        let enc = self
            .encoder
            .encode_tokens(&mut self.tape, sentence, &zcfg, &mut silent)?;
        let em = crf::emissions_from_encoding(&mut self.tape, &self.crf, enc)?;
        let decoded = crf::viterbi_decode(&self.tape, &self.crf, &em)?;
        debug_assert_eq!(silent.draws(), 0, "eval-mode forward consumed randomness");
        self.tape.truncate(mark);
        Ok(decoded.0)
    }

    /// Mean gold log-likelihood over `sentences` under eval-mode encoding; a
    /// training diagnostic.
    pub fn mean_log_likelihood(&mut self, sentences: &[Sentence]) -> Result<f64> {
        let mut total = 0.0;
        let zcfg = ZoneoutConfig::eval(self.config.zc, self.config.zh)?;
        for sentence in sentences {
            let mark = self.tape.len();
            let mut silent = CountingRng::seed_from_u64(0);
            let enc = self
                .encoder
                .encode_tokens(&mut self.tape, sentence, &zcfg, &mut silent)?;
            let em = crf::emissions_from_encoding(&mut self.tape, &self.crf, enc)?;
            let ll = crf::log_likelihood(&mut self.tape, &self.crf, &em, &sentence.gold_labels)?;
            total += self.tape.value(ll);
            self.tape.truncate(mark);
        }
        Ok(total / sentences.len().max(1) as f64)
    }

    /// Numberizes raw sentences against this model's vocabularies.
    pub fn numberize(&self, raw: &[RawSentence]) -> Result<Vec<Sentence>> {
        raw.iter()
            .map(|s| data::numberize(s, &self.words, &self.chars, &self.labels))
            .collect()
    }
}

/// The best model found during training.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub dev_f1: f64,
    pub epoch: usize,
}

fn aux_dim_of(sentences: &[RawSentence], what: &str) -> Result<usize> {
    let mut dim = None;
    for (i, s) in sentences.iter().enumerate() {
        let d = match &s.aux {
            Some(rows) => rows.first().map(|r| r.len()).unwrap_or(0),
            None => 0,
        };
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::Data(format!(
                    "{what} sentence {i} has auxiliary width {d}, earlier sentences have {prev}"
                )));
            }
            _ => {}
        }
    }
    Ok(dim.unwrap_or(0))
}

/// Trains on `train_raw`, selecting the best epoch by dev F1 and stopping
/// after `patience` epochs without improvement. Writes one log line per
/// epoch: epoch, mean train loss, dev P/R/F1, and sigma_t at epoch end.
pub fn train(
    config: &TrainConfig,
    train_raw: &[RawSentence],
    dev_raw: &[RawSentence],
    embeddings: Option<&Embeddings>,
    log: &mut dyn Write,
) -> Result<Checkpoint> {
    config.validate()?;
    if train_raw.is_empty() || dev_raw.is_empty() {
        return Err(Error::Argument(
            "training and development sets must be non-empty".into(),
        ));
    }

    let mut train_set = train_raw.to_vec();
    let mut dev_set = dev_raw.to_vec();
    if config.scheme == Scheme::Iob1 {
        data::convert_scheme(&mut train_set, Scheme::Iob1, Scheme::Iob2)?;
        data::convert_scheme(&mut dev_set, Scheme::Iob1, Scheme::Iob2)?;
    }

    let aux_dim = aux_dim_of(&train_set, "training")?;
    let dev_aux = aux_dim_of(&dev_set, "development")?;
    if aux_dim != dev_aux {
        return Err(Error::Data(format!(
            "training auxiliary width {aux_dim} does not match development width {dev_aux}"
        )));
    }

    let mut rng = CountingRng::seed_from_u64(config.seed);

    let build = data::build_vocab(&train_set, embeddings, config.lowercase);
    let chars = data::build_char_vocab(&train_set);
    let labels = LabelSet::from_sentences(&train_set)?;
    let word_table = data::build_word_table(&build.vocab, embeddings, config.word_dim, &mut rng);
    let noise_seed: u64 = rng.random();

    let mut model = Model::with_shapes(config.clone(), build.vocab, chars, labels, aux_dim)?;
    model.randomize(&word_table, &mut rng)?;

    let mut optimizer = Sgd::new(config.lr, config.momentum, config.eta, config.gamma, noise_seed)?;
    optimizer.clip = config.clip;

    let train_sents = model.numberize(&train_set)?;
    let dev_sents = model.numberize(&dev_set)?;
    let dev_gold: Vec<Vec<String>> = dev_set.iter().map(|s| s.labels.clone()).collect();

    let params = model.param_ids();
    model.tape.zero_grad(&params);
    let base = model.base_len();
    let zcfg = ZoneoutConfig::train(config.zc, config.zh)?;

    let mut best: Option<(f64, Vec<Vec<f64>>, usize)> = None;
    let mut stale_epochs = 0usize;
    let mut order: Vec<usize> = (0..train_sents.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &idx in &order {
            let loss = model.sentence_loss(&train_sents[idx], &zcfg, &mut rng)?;
            let value = model.tape.value(loss);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    sentence: idx,
                    step: optimizer.steps(),
                });
            }
            total_loss += value;
            model.tape.backward(loss)?;
            optimizer.step(&mut model.tape, &params)?;
            model.tape.zero_grad(&params);
            model.tape.truncate(base);
        }
        let mean_loss = total_loss / train_sents.len() as f64;

        let mut predictions = Vec::with_capacity(dev_sents.len());
        for sentence in &dev_sents {
            let ids = model.predict_sentence(sentence)?;
            predictions.push(
                ids.into_iter()
                    .map(|i| model.labels.label(i).to_string())
                    .collect::<Vec<_>>(),
            );
        }
        let report = eval::f1_score(&dev_gold, &predictions)?;
        writeln!(
            log,
            "epoch={epoch} loss={mean_loss:.6} dev_p={:.6} dev_r={:.6} dev_f1={:.6} sigma={:.6}",
            report.precision,
            report.recall,
            report.f1,
            optimizer.noise_std()
        )?;

        let improved = best.as_ref().is_none_or(|(f1, _, _)| report.f1 > *f1);
        if improved {
            best = Some((report.f1, model.snapshot(), epoch));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }

    let (dev_f1, snapshot, epoch) = best.expect("at least one epoch ran");
    model.restore(&snapshot);
    Ok(Checkpoint {
        model,
        dev_f1,
        epoch,
    })
}

/// Labels raw sentences with a trained model (eval mode, Viterbi decoding).
pub fn predict(checkpoint: &mut Checkpoint, sentences: &[RawSentence]) -> Result<Vec<Vec<String>>> {
    let numberized = checkpoint.model.numberize(sentences)?;
    let mut out = Vec::with_capacity(numberized.len());
    for sentence in &numberized {
        let ids = checkpoint.model.predict_sentence(sentence)?;
        out.push(
            ids.into_iter()
                .map(|i| checkpoint.model.labels.label(i).to_string())
                .collect(),
        );
    }
    Ok(out)
}

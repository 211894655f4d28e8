//! A self-contained biLSTM-CRF sequence tagger.
//!
//! The model is a stack of three residual bidirectional LSTMs over word,
//! character, and optional auxiliary embeddings, decoded by a linear-chain
//! CRF. Training supports three optional optimizations: an entropy-based
//! confidence penalty on the CRF loss, annealed Gaussian gradient noise, and
//! zoneout regularization of the recurrent states. All math runs on a small
//! f64 tape with reverse-mode differentiation so that every gradient can be
//! checked against finite differences.

pub mod crf;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod lstm;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

pub use crf::{CrfParams, Emissions};
pub use data::{LabelSet, RawSentence, Scheme, Sentence, Vocab};
pub use encoder::EncoderParams;
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use lstm::{LstmCell, Mode, ZoneoutConfig};
pub use optim::Sgd;
pub use rng::CountingRng;
pub use tensor::{Tape, TensorId};
pub use trainer::{Checkpoint, Model, TrainConfig};

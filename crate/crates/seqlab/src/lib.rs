//! Sequence labeling from scratch.
//!
//! The crate implements two model families over BIO-tagged token sequences
//! and the shared plumbing around them:
//!
//! * bidirectional recurrent taggers (vanilla RNN, LSTM, GRU) with an
//!   embedding layer, a softmax output layer, and full backpropagation
//!   through time ([`model`]);
//! * linear-chain CRF baselines over real-valued features with
//!   forward-backward training and Viterbi decoding ([`crf`]);
//! * BIO encoding/decoding, entity-level micro-averaged evaluation, and
//!   k-fold splitting ([`tagscheme`]);
//! * a desk-scale skip-gram embedding trainer and word2vec text I/O
//!   ([`embeddings`]);
//! * CoNLL-style corpus I/O and deterministic synthetic corpora
//!   ([`corpus`]).
//!
//! Everything is deterministic given a seed: the same configuration always
//! produces bit-identical models. Shape mismatches in the numeric kernels
//! panic with a "contract violation" message; data-driven failures return
//! [`Error`].

pub mod cells;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod error;
pub mod model;
pub mod numerics;
pub mod serialize;
pub mod tagscheme;
pub mod vocab;

#[cfg(test)]
pub(crate) mod testutil;

pub use cells::{CellKind, CellParams, GateVariant, TensorSet};
pub use corpus::{Document, SeqUnit, SynthProfile, TaggedSequence};
pub use crf::{CrfModel, CrfTrainConfig};
pub use embeddings::{EmbeddingTable, SkipGramConfig};
pub use error::{Error, Result};
pub use model::{ModelConfig, SequenceModel, TrainConfig};
pub use numerics::{Matrix, Rng};
pub use serialize::AnyModel;
pub use tagscheme::{EntitySpan, Metrics};
pub use vocab::{TagSet, Vocabulary};

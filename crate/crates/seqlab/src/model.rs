//! The bidirectional sequence-labeling stack: embedding lookup, a forward
//! and a backward recurrent chain, concatenation, and a softmax output
//! layer, together with loss, backpropagation-through-time training,
//! prediction, and gradient checking.
//!
//! Each token's representation is the concatenation of the forward chain's
//! state after reading the prefix and the backward chain's state after
//! reading the suffix; both chains start from zero state at their end of
//! the sequence. The softmax layer has no bias. Training is plain SGD with
//! one update per sequence and optional global gradient-norm clipping;
//! embedding rows are updated by the back-propagated errors, so rows of
//! tokens never seen in training stay bit-identical.

use crate::cells::{CellKind, CellParams, GateVariant, StepCache, TensorSet};
use crate::corpus::{to_sequences, Document, SeqUnit, TaggedSequence};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Matrix, Rng};
use crate::vocab::{TagSet, Vocabulary};

/// Static model shape and variant flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub cell_kind: CellKind,
    pub hidden: usize,
    pub variant: GateVariant,
    pub use_bias: bool,
    pub seq_unit: SeqUnit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell_kind: CellKind::Lstm,
            hidden: 100,
            variant: GateVariant::Paper,
            use_bias: false,
            seq_unit: SeqUnit::Sentence,
        }
    }
}

/// Training hyperparameters. `seq_unit` selects how documents are turned
/// into training sequences and must match the model's own unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub seq_unit: SeqUnit,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            seed: 42,
            clip_norm: None,
            seq_unit: SeqUnit::Sentence,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::contract("learning_rate must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        if let Some(c) = self.clip_norm {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::contract("clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

/// The trained (or trainable) bidirectional tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub vocab: Vocabulary,
    pub tagset: TagSet,
    /// |V| x d; row i is token i's vector.
    pub embedding: Matrix,
    pub fwd_cell: CellParams,
    pub bwd_cell: CellParams,
    /// 2H x K; logits are u_t^T W with no bias.
    pub softmax_w: Matrix,
    pub config: ModelConfig,
}

impl SequenceModel {
    /// Builds a model around a pre-initialized embedding matrix (one row
    /// per vocabulary entry). Cell and softmax weights are drawn from
    /// per-layer sub-streams of `seed`.
    pub fn init(
        vocab: Vocabulary,
        tagset: TagSet,
        embedding: Matrix,
        config: ModelConfig,
        seed: u64,
    ) -> Self {
        assert_eq!(
            embedding.rows(),
            vocab.len(),
            "contract violation: embedding rows != vocabulary size"
        );
        assert!(config.hidden > 0 && !tagset.is_empty());
        let dim = embedding.cols();
        let rng = Rng::new(seed);
        let fwd_cell = CellParams::new(config.cell_kind, config.hidden, dim, config.use_bias, &rng, "fwd");
        let bwd_cell = CellParams::new(config.cell_kind, config.hidden, dim, config.use_bias, &rng, "bwd");
        let softmax_w = Matrix::glorot_uniform(
            2 * config.hidden,
            tagset.len(),
            &mut rng.substream("softmax"),
        );
        SequenceModel {
            vocab,
            tagset,
            embedding,
            fwd_cell,
            bwd_cell,
            softmax_w,
            config,
        }
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.tagset.len()
    }

    /// Maps tokens to vocabulary ids; lookup is on the lowercased form and
    /// unknown words fall back to the reserved unknown index.
    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.vocab.index_or_unknown(&t.to_lowercase()))
            .collect()
    }

    /// Rows of the embedding matrix for the given ids, in order.
    pub fn embed_lookup(&self, token_ids: &[usize]) -> Vec<Vec<f64>> {
        token_ids
            .iter()
            .map(|&id| {
                assert!(
                    id < self.embedding.rows(),
                    "contract violation: token id {id} out of range"
                );
                self.embedding.row(id).to_vec()
            })
            .collect()
    }

    /// Runs the full stack over one sequence of token ids, producing the
    /// per-token label distributions plus everything the backward pass
    /// needs.
    pub fn forward(&self, token_ids: &[usize]) -> Result<ForwardPass> {
        if token_ids.is_empty() {
            return Err(Error::EmptyInput("forward over empty sequence"));
        }
        let steps = token_ids.len();
        let inputs = self.embed_lookup(token_ids);
        let variant = self.config.variant;

        let mut fwd_caches = Vec::with_capacity(steps);
        let mut fwd_h = Vec::with_capacity(steps);
        let mut state = self.fwd_cell.zero_state();
        for x in &inputs {
            let (next, cache) = self.fwd_cell.step(x, &state, variant);
            fwd_caches.push(cache);
            fwd_h.push(next.h.clone());
            state = next;
        }

        let mut bwd_caches: Vec<Option<StepCache>> = (0..steps).map(|_| None).collect();
        let mut bwd_h: Vec<Vec<f64>> = vec![Vec::new(); steps];
        let mut state = self.bwd_cell.zero_state();
        for t in (0..steps).rev() {
            let (next, cache) = self.bwd_cell.step(&inputs[t], &state, variant);
            bwd_caches[t] = Some(cache);
            bwd_h[t] = next.h.clone();
            state = next;
        }

        let mut concat = Vec::with_capacity(steps);
        let mut dists = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut u = fwd_h[t].clone();
            u.extend_from_slice(&bwd_h[t]);
            let logits = self.softmax_w.matvec_t(&u);
            dists.push(softmax(&logits));
            concat.push(u);
        }
        Ok(ForwardPass {
            token_ids: token_ids.to_vec(),
            dists,
            concat,
            fwd_caches,
            bwd_caches: bwd_caches.into_iter().map(Option::unwrap).collect(),
        })
    }

    /// Most likely tag per token; ties break toward the lowest tag index.
    /// An empty input yields an empty output.
    pub fn predict(&self, tokens: &[String]) -> Vec<String> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let pass = self.forward(&self.token_ids(tokens)).expect("nonempty");
        pass.dists
            .iter()
            .map(|row| self.tagset.tag_of(argmax(row)).to_string())
            .collect()
    }

    /// Full backpropagation through the softmax layer, both chains, and
    /// the embedding rows of the sequence's tokens, for the mean per-token
    /// negative log-likelihood of `gold_ids`.
    #[allow(clippy::needless_range_loop)]
    pub fn backward(&self, pass: &ForwardPass, gold_ids: &[usize]) -> ModelGrads {
        let steps = pass.token_ids.len();
        assert_eq!(gold_ids.len(), steps, "contract violation: gold length");
        let hidden = self.hidden();
        let variant = self.config.variant;
        let mut grads = ModelGrads::zeros_like(self);
        let inv_t = 1.0 / steps as f64;

        // d(loss)/d(u_t), via the softmax layer
        let mut d_concat = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut d_logits = pass.dists[t].clone();
            d_logits[gold_ids[t]] -= 1.0;
            for v in d_logits.iter_mut() {
                *v *= inv_t;
            }
            grads.softmax_w.add_outer(&pass.concat[t], &d_logits);
            d_concat.push(self.softmax_w.matvec(&d_logits));
        }

        // forward chain: unroll from the last step back
        let mut carry_h = vec![0.0; hidden];
        let mut carry_c: Option<Vec<f64>> = None;
        for t in (0..steps).rev() {
            let mut d_h = d_concat[t][..hidden].to_vec();
            crate::numerics::add_assign(&mut d_h, &carry_h);
            let (d_x, d_h_prev, d_c_prev) = self.fwd_cell.step_backward(
                &pass.fwd_caches[t],
                &d_h,
                carry_c.as_deref(),
                variant,
                &mut grads.fwd,
            );
            grads.add_embedding_row(pass.token_ids[t], &d_x);
            carry_h = d_h_prev;
            carry_c = d_c_prev;
        }

        // backward chain: its recurrence runs right-to-left, so gradients
        // flow left-to-right
        let mut carry_h = vec![0.0; hidden];
        let mut carry_c: Option<Vec<f64>> = None;
        for t in 0..steps {
            let mut d_h = d_concat[t][hidden..].to_vec();
            crate::numerics::add_assign(&mut d_h, &carry_h);
            let (d_x, d_h_prev, d_c_prev) = self.bwd_cell.step_backward(
                &pass.bwd_caches[t],
                &d_h,
                carry_c.as_deref(),
                variant,
                &mut grads.bwd,
            );
            grads.add_embedding_row(pass.token_ids[t], &d_x);
            carry_h = d_h_prev;
            carry_c = d_c_prev;
        }
        grads
    }

    fn apply_grads(&mut self, grads: &ModelGrads, lr: f64) {
        if lr == 0.0 {
            return;
        }
        self.fwd_cell.axpy(-lr, &grads.fwd);
        self.bwd_cell.axpy(-lr, &grads.bwd);
        for (w, g) in self
            .softmax_w
            .as_mut_slice()
            .iter_mut()
            .zip(grads.softmax_w.as_slice())
        {
            *w -= lr * g;
        }
        for &row in &grads.touched_rows {
            let dst = self.embedding.row_mut(row);
            let src = grads.embedding.row(row);
            for (w, g) in dst.iter_mut().zip(src) {
                *w -= lr * g;
            }
        }
    }

    /// Trains in place with per-sequence SGD updates and returns the
    /// per-epoch mean loss trace. Deterministic given the config seed.
    pub fn train(&mut self, corpus: &[Document], config: &TrainConfig) -> Result<Vec<f64>> {
        config.validate()?;
        let sequences = to_sequences(corpus, config.seq_unit);
        if sequences.is_empty() {
            return Err(Error::EmptyInput("training corpus has no sequences"));
        }
        let prepared: Vec<(Vec<usize>, Vec<usize>)> = sequences
            .iter()
            .map(|s| {
                let gold = s
                    .tags
                    .iter()
                    .map(|t| {
                        self.tagset.index_of(t).ok_or_else(|| {
                            Error::contract(format!("tag {t:?} not in the model tag set"))
                        })
                    })
                    .collect::<Result<Vec<usize>>>()?;
                Ok((self.token_ids(&s.tokens), gold))
            })
            .collect::<Result<_>>()?;

        let rng = Rng::new(config.seed);
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut order: Vec<usize> = (0..prepared.len()).collect();
            if config.shuffle {
                rng.substream_n("train.epoch", epoch as u64).shuffle(&mut order);
            }
            let mut epoch_loss = 0.0;
            for &idx in &order {
                let (ids, gold) = &prepared[idx];
                let pass = self.forward(ids)?;
                let loss = nll_loss(&pass.dists, gold)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric {
                        epoch,
                        sequence: idx,
                        msg: format!("loss is {loss}"),
                    });
                }
                epoch_loss += loss;
                let mut grads = self.backward(&pass, gold);
                if let Some(clip) = config.clip_norm {
                    grads.clip_global_norm(clip);
                }
                self.apply_grads(&grads, config.learning_rate);
            }
            trace.push(epoch_loss / prepared.len() as f64);
        }
        Ok(trace)
    }

    /// All trainable tensors in serialization order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice())];
        for (name, t) in self.fwd_cell.tensors() {
            out.push((format!("fwd.{name}"), t));
        }
        for (name, t) in self.bwd_cell.tensors() {
            out.push((format!("bwd.{name}"), t));
        }
        out.push(("softmax_w".to_string(), self.softmax_w.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_mut_slice())];
        for (name, t) in self.fwd_cell.tensors_mut() {
            out.push((format!("fwd.{name}"), t));
        }
        for (name, t) in self.bwd_cell.tensors_mut() {
            out.push((format!("bwd.{name}"), t));
        }
        out.push(("softmax_w".to_string(), self.softmax_w.as_mut_slice()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Output of [`SequenceModel::forward`]: per-token distributions plus the
/// caches needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub token_ids: Vec<usize>,
    /// T x K; each row sums to 1.
    pub dists: Vec<Vec<f64>>,
    concat: Vec<Vec<f64>>,
    fwd_caches: Vec<StepCache>,
    bwd_caches: Vec<StepCache>,
}

/// Gradient accumulator mirroring the model's parameters. The embedding
/// gradient is dense but only rows listed in `touched_rows` are nonzero.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub embedding: Matrix,
    pub touched_rows: Vec<usize>,
    pub fwd: CellParams,
    pub bwd: CellParams,
    pub softmax_w: Matrix,
}

impl ModelGrads {
    pub fn zeros_like(model: &SequenceModel) -> Self {
        ModelGrads {
            embedding: Matrix::zeros(model.embedding.rows(), model.embedding.cols()),
            touched_rows: Vec::new(),
            fwd: model.fwd_cell.zeros_like(),
            bwd: model.bwd_cell.zeros_like(),
            softmax_w: Matrix::zeros(model.softmax_w.rows(), model.softmax_w.cols()),
        }
    }

    fn add_embedding_row(&mut self, row: usize, d: &[f64]) {
        if !self.touched_rows.contains(&row) {
            self.touched_rows.push(row);
        }
        let dst = self.embedding.row_mut(row);
        for (a, b) in dst.iter_mut().zip(d) {
            *a += b;
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = self.fwd.sq_norm() + self.bwd.sq_norm();
        sq += self.softmax_w.as_slice().iter().map(|x| x * x).sum::<f64>();
        for &row in &self.touched_rows {
            sq += self.embedding.row(row).iter().map(|x| x * x).sum::<f64>();
        }
        sq.sqrt()
    }

    /// Scales every gradient so the global norm is at most `clip`.
    pub fn clip_global_norm(&mut self, clip: f64) {
        let norm = self.global_norm();
        if norm > clip {
            let s = clip / norm;
            self.fwd.scale_all(s);
            self.bwd.scale_all(s);
            crate::numerics::scale(self.softmax_w.as_mut_slice(), s);
            crate::numerics::scale(self.embedding.as_mut_slice(), s);
        }
    }

    /// Flat view matching [`SequenceModel::tensors`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.embedding.as_slice());
        for (_, t) in self.fwd.tensors() {
            out.extend_from_slice(t);
        }
        for (_, t) in self.bwd.tensors() {
            out.extend_from_slice(t);
        }
        out.extend_from_slice(self.softmax_w.as_slice());
        out
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean over positions of -ln p(gold_t). Zero iff every gold label has
/// probability 1; equals ln K on uniform rows.
pub fn nll_loss(dists: &[Vec<f64>], gold_ids: &[usize]) -> Result<f64> {
    if dists.len() != gold_ids.len() {
        return Err(Error::contract(format!(
            "distribution/gold length mismatch: {} vs {}",
            dists.len(),
            gold_ids.len()
        )));
    }
    if dists.is_empty() {
        return Err(Error::EmptyInput("nll_loss over empty sequence"));
    }
    let mut total = 0.0;
    for (row, &gold) in dists.iter().zip(gold_ids) {
        if gold >= row.len() {
            return Err(Error::contract(format!(
                "gold id {gold} out of range for {} labels",
                row.len()
            )));
        }
        total -= row[gold].ln();
    }
    Ok(total / dists.len() as f64)
}

/// Compares the analytic BPTT gradient of the mean NLL on `sample` against
/// central differences with step `eps`, over every parameter of the model
/// (embedding, both chains, softmax). Returns the worst relative error;
/// entries agreeing within 1e-9 absolutely score 0, which covers the
/// zero/zero case.
#[allow(clippy::needless_range_loop)]
pub fn grad_check(model: &mut SequenceModel, sample: &TaggedSequence, eps: f64) -> Result<f64> {
    let ids = model.token_ids(&sample.tokens);
    let gold: Vec<usize> = sample
        .tags
        .iter()
        .map(|t| {
            model
                .tagset
                .index_of(t)
                .ok_or_else(|| Error::contract(format!("tag {t:?} not in tag set")))
        })
        .collect::<Result<_>>()?;

    let pass = model.forward(&ids)?;
    let analytic = model.backward(&pass, &gold).flatten();

    let loss_of = |m: &SequenceModel| -> f64 {
        let pass = m.forward(&ids).expect("nonempty");
        nll_loss(&pass.dists, &gold).expect("consistent")
    };

    let n = model.param_count();
    let mut worst = 0.0f64;
    for k in 0..n {
        let orig = get_flat(model, k);
        set_flat(model, k, orig + eps);
        let fp = loss_of(model);
        set_flat(model, k, orig - eps);
        let fm = loss_of(model);
        set_flat(model, k, orig);
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[k];
        let diff = (a - numeric).abs();
        let err = if diff < 1e-9 {
            0.0
        } else {
            diff / a.abs().max(numeric.abs())
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn get_flat(m: &SequenceModel, mut k: usize) -> f64 {
    for (_, t) in m.tensors() {
        if k < t.len() {
            return t[k];
        }
        k -= t.len();
    }
    panic!("flat index out of range");
}

fn set_flat(m: &mut SequenceModel, mut k: usize, v: f64) {
    for (_, t) in m.tensors_mut() {
        if k < t.len() {
            t[k] = v;
            return;
        }
        k -= t.len();
    }
    panic!("flat index out of range");
}

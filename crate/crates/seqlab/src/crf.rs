//! Linear-chain CRF over real-valued features, with forward-backward
//! training and Viterbi decoding.
//!
//! The chain factors as exp(start[y_1] + sum_t emission[y_t].f_t +
//! sum_{t>=2} transition[y_{t-1}, y_t]), normalized by the partition
//! function. Features per position are dense blocks: the token's embedding
//! vector, optional bag-of-words count vectors over the sentence sections
//! strictly before and strictly after the position, and a one-hot word
//! identity block. The embedding table is a fixed feature source here, not
//! a trained parameter. BIO structural constraints are not hard-coded into
//! the transitions; malformed output is repaired at decode time by the
//! tagscheme module.

use crate::corpus::{to_sequences, Document, SeqUnit};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Matrix, Rng};
use crate::vocab::{TagSet, Vocabulary};

/// Dense feature-vector layout: embedding block, then (optionally) the
/// before/after context-count blocks, then the word-identity one-hot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub context: bool,
}

impl FeatureLayout {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.embed_dim + self.context_len() + self.vocab_size
    }

    fn context_len(&self) -> usize {
        if self.context {
            2 * self.vocab_size
        } else {
            0
        }
    }

    fn before_offset(&self) -> usize {
        self.embed_dim
    }

    fn after_offset(&self) -> usize {
        self.embed_dim + self.vocab_size
    }

    fn onehot_offset(&self) -> usize {
        self.embed_dim + self.context_len()
    }
}

/// Features for one position of a sentence of token ids.
pub fn featurize(
    token_ids: &[usize],
    position: usize,
    layout: &FeatureLayout,
    embedding: &Matrix,
) -> Vec<f64> {
    assert!(
        position < token_ids.len(),
        "contract violation: featurize position {position} out of range"
    );
    let mut f = vec![0.0; layout.len()];
    let id = token_ids[position];
    f[..layout.embed_dim].copy_from_slice(embedding.row(id));
    if layout.context {
        let before = layout.before_offset();
        for &w in &token_ids[..position] {
            f[before + w] += 1.0;
        }
        let after = layout.after_offset();
        for &w in &token_ids[position + 1..] {
            f[after + w] += 1.0;
        }
    }
    f[layout.onehot_offset() + id] = 1.0;
    f
}

/// The CRF tagger: emission weights over features, label-transition
/// weights, and a start-score vector, plus the fixed feature sources
/// (vocabulary and embedding table) it was built around.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub vocab: Vocabulary,
    pub tagset: TagSet,
    /// Fixed |V| x d feature table; never updated by training.
    pub feat_embedding: Matrix,
    pub layout: FeatureLayout,
    /// K x F.
    pub emission: Matrix,
    /// K x K, indexed [previous][next].
    pub transition: Matrix,
    /// K, score of each label at the first position.
    pub start: Vec<f64>,
}

impl CrfModel {
    /// Weights start at zero; the conditional likelihood is concave, so
    /// the origin is as good a start as any and keeps runs reproducible.
    pub fn init(
        vocab: Vocabulary,
        tagset: TagSet,
        feat_embedding: Matrix,
        context: bool,
    ) -> Self {
        assert_eq!(
            feat_embedding.rows(),
            vocab.len(),
            "contract violation: embedding rows != vocabulary size"
        );
        let layout = FeatureLayout {
            embed_dim: feat_embedding.cols(),
            vocab_size: vocab.len(),
            context,
        };
        let k = tagset.len();
        CrfModel {
            vocab,
            tagset,
            feat_embedding,
            layout,
            emission: Matrix::zeros(k, layout.len()),
            transition: Matrix::zeros(k, k),
            start: vec![0.0; k],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.tagset.len()
    }

    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.vocab.index_or_unknown(&t.to_lowercase()))
            .collect()
    }

    /// Feature vectors for every position of a sentence.
    pub fn featurize_sentence(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        let ids = self.token_ids(tokens);
        (0..ids.len())
            .map(|t| featurize(&ids, t, &self.layout, &self.feat_embedding))
            .collect()
    }

    /// T x K matrix of emission scores; skips zero feature entries, which
    /// dominate the count and one-hot blocks.
    fn emission_scores(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.num_labels();
        features
            .iter()
            .map(|f| {
                (0..k)
                    .map(|y| {
                        let row = self.emission.row(y);
                        f.iter()
                            .zip(row)
                            .filter(|(v, _)| **v != 0.0)
                            .map(|(v, w)| v * w)
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Most likely tag sequence as tag strings; empty input decodes to an
    /// empty output.
    pub fn predict(&self, tokens: &[String]) -> Vec<String> {
        let features = self.featurize_sentence(tokens);
        viterbi(self, &features)
            .into_iter()
            .map(|y| self.tagset.tag_of(y).to_string())
            .collect()
    }
}

/// ln Z(x): the log partition function over all label sequences, by the
/// log-space forward recursion.
#[allow(clippy::needless_range_loop)]
pub fn log_partition(model: &CrfModel, features: &[Vec<f64>]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyInput("log_partition over empty sequence"));
    }
    let scores = model.emission_scores(features);
    let k = model.num_labels();
    let mut alpha: Vec<f64> = (0..k).map(|y| model.start[y] + scores[0][y]).collect();
    let mut scratch = vec![0.0; k];
    for emit in scores.iter().skip(1) {
        let next: Vec<f64> = (0..k)
            .map(|y| {
                for j in 0..k {
                    scratch[j] = alpha[j] + model.transition.get(j, y);
                }
                log_sum_exp(&scratch) + emit[y]
            })
            .collect();
        alpha = next;
    }
    Ok(log_sum_exp(&alpha))
}

/// Forward-backward pass: returns (ln Z, unary marginals gamma[t][k],
/// pairwise marginals xi[t][j][k] for transitions into position t >= 1).
#[allow(clippy::needless_range_loop)]
pub fn marginals(
    model: &CrfModel,
    features: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>, Vec<Matrix>)> {
    if features.is_empty() {
        return Err(Error::EmptyInput("marginals over empty sequence"));
    }
    let scores = model.emission_scores(features);
    let steps = features.len();
    let k = model.num_labels();

    let mut alpha = vec![vec![0.0; k]; steps];
    for y in 0..k {
        alpha[0][y] = model.start[y] + scores[0][y];
    }
    let mut scratch = vec![0.0; k];
    for t in 1..steps {
        for y in 0..k {
            for j in 0..k {
                scratch[j] = alpha[t - 1][j] + model.transition.get(j, y);
            }
            alpha[t][y] = log_sum_exp(&scratch) + scores[t][y];
        }
    }
    let ln_z = log_sum_exp(&alpha[steps - 1]);

    let mut beta = vec![vec![0.0; k]; steps];
    for t in (0..steps - 1).rev() {
        for j in 0..k {
            for y in 0..k {
                scratch[y] = model.transition.get(j, y) + scores[t + 1][y] + beta[t + 1][y];
            }
            beta[t][j] = log_sum_exp(&scratch);
        }
    }

    let gamma: Vec<Vec<f64>> = (0..steps)
        .map(|t| {
            (0..k)
                .map(|y| (alpha[t][y] + beta[t][y] - ln_z).exp())
                .collect()
        })
        .collect();
    let xi: Vec<Matrix> = (1..steps)
        .map(|t| {
            let mut m = Matrix::zeros(k, k);
            for j in 0..k {
                for y in 0..k {
                    let v = alpha[t - 1][j]
                        + model.transition.get(j, y)
                        + scores[t][y]
                        + beta[t][y]
                        - ln_z;
                    m.set(j, y, v.exp());
                }
            }
            m
        })
        .collect();
    Ok((ln_z, gamma, xi))
}

/// Gradient container for the trainable CRF weights.
#[derive(Debug, Clone)]
pub struct CrfGrads {
    pub emission: Matrix,
    pub transition: Matrix,
    pub start: Vec<f64>,
}

/// ln p(gold | x) and the gradient of the per-sentence penalized
/// objective ln p - (l2/2)|theta|^2. The returned log-likelihood itself
/// excludes the penalty; the gradient includes it.
#[allow(clippy::needless_range_loop)]
pub fn loglik_and_grad(
    model: &CrfModel,
    features: &[Vec<f64>],
    gold: &[usize],
    l2: f64,
) -> Result<(f64, CrfGrads)> {
    if features.len() != gold.len() {
        return Err(Error::contract(format!(
            "feature/gold length mismatch: {} vs {}",
            features.len(),
            gold.len()
        )));
    }
    let k = model.num_labels();
    if let Some(&bad) = gold.iter().find(|&&g| g >= k) {
        return Err(Error::contract(format!("gold label {bad} out of range")));
    }
    let (ln_z, gamma, xi) = marginals(model, features)?;
    let scores = model.emission_scores(features);
    let steps = features.len();

    let mut gold_score = model.start[gold[0]] + scores[0][gold[0]];
    for t in 1..steps {
        gold_score += model.transition.get(gold[t - 1], gold[t]) + scores[t][gold[t]];
    }
    let ln_p = gold_score - ln_z;

    // observed minus expected features
    let mut g = CrfGrads {
        emission: Matrix::zeros(k, model.layout.len()),
        transition: Matrix::zeros(k, k),
        start: vec![0.0; k],
    };
    for t in 0..steps {
        let f = &features[t];
        for y in 0..k {
            let coef = (if gold[t] == y { 1.0 } else { 0.0 }) - gamma[t][y];
            if coef != 0.0 {
                let row = g.emission.row_mut(y);
                for (i, v) in f.iter().enumerate() {
                    if *v != 0.0 {
                        row[i] += coef * v;
                    }
                }
            }
        }
    }
    for (t, x) in xi.iter().enumerate() {
        let t = t + 1;
        for j in 0..k {
            for y in 0..k {
                let obs = if gold[t - 1] == j && gold[t] == y { 1.0 } else { 0.0 };
                let v = g.transition.get(j, y) + obs - x.get(j, y);
                g.transition.set(j, y, v);
            }
        }
    }
    for y in 0..k {
        g.start[y] = (if gold[0] == y { 1.0 } else { 0.0 }) - gamma[0][y];
    }

    if l2 != 0.0 {
        for (gv, wv) in g
            .emission
            .as_mut_slice()
            .iter_mut()
            .zip(model.emission.as_slice())
        {
            *gv -= l2 * wv;
        }
        for (gv, wv) in g
            .transition
            .as_mut_slice()
            .iter_mut()
            .zip(model.transition.as_slice())
        {
            *gv -= l2 * wv;
        }
        for (gv, wv) in g.start.iter_mut().zip(&model.start) {
            *gv -= l2 * wv;
        }
    }
    Ok((ln_p, g))
}

/// Highest-scoring label sequence; ties break toward the lower tag index
/// at each backtrack step. Empty input yields an empty path.
#[allow(clippy::needless_range_loop)]
pub fn viterbi(model: &CrfModel, features: &[Vec<f64>]) -> Vec<usize> {
    if features.is_empty() {
        return Vec::new();
    }
    let scores = model.emission_scores(features);
    let steps = features.len();
    let k = model.num_labels();

    let mut delta: Vec<f64> = (0..k).map(|y| model.start[y] + scores[0][y]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(steps - 1);
    for emit in scores.iter().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; k];
        let mut ptr = vec![0usize; k];
        for (y, nv) in next.iter_mut().enumerate() {
            let mut best = delta[0] + model.transition.get(0, y);
            let mut best_j = 0usize;
            for j in 1..k {
                let v = delta[j] + model.transition.get(j, y);
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            *nv = best + emit[y];
            ptr[y] = best_j;
        }
        back.push(ptr);
        delta = next;
    }

    let mut best_y = 0usize;
    for y in 1..k {
        if delta[y] > delta[best_y] {
            best_y = y;
        }
    }
    let mut path = vec![best_y];
    for ptr in back.iter().rev() {
        best_y = ptr[best_y];
        path.push(best_y);
    }
    path.reverse();
    path
}

/// CRF training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
    pub shuffle: bool,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        CrfTrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            seed: 42,
            l2: 1e-3,
            shuffle: true,
        }
    }
}

impl CrfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::contract("learning_rate must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::contract("l2 must be >= 0"));
        }
        Ok(())
    }
}

/// Gradient-ascent training on the penalized conditional likelihood, one
/// update per sentence. CRFs always train at sentence granularity (the
/// context features are sentence-scoped). Returns the per-epoch mean
/// ln p(gold | x) observed before each update.
pub fn train_crf(
    model: &mut CrfModel,
    corpus: &[Document],
    config: &CrfTrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let sentences = to_sequences(corpus, SeqUnit::Sentence);
    if sentences.is_empty() {
        return Err(Error::EmptyInput("training corpus has no sentences"));
    }
    let prepared: Vec<(Vec<Vec<f64>>, Vec<usize>)> = sentences
        .iter()
        .map(|s| {
            let gold = s
                .tags
                .iter()
                .map(|t| {
                    model.tagset.index_of(t).ok_or_else(|| {
                        Error::contract(format!("tag {t:?} not in the model tag set"))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            Ok((model.featurize_sentence(&s.tokens), gold))
        })
        .collect::<Result<_>>()?;

    let rng = Rng::new(config.seed);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        if config.shuffle {
            rng.substream_n("crf.epoch", epoch as u64).shuffle(&mut order);
        }
        let mut epoch_ll = 0.0;
        for &idx in &order {
            let (features, gold) = &prepared[idx];
            let (ln_p, grads) = loglik_and_grad(model, features, gold, config.l2)?;
            if !ln_p.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    sequence: idx,
                    msg: format!("log-likelihood is {ln_p}"),
                });
            }
            epoch_ll += ln_p;
            if config.learning_rate != 0.0 {
                apply_ascent(model, &grads, config.learning_rate);
            }
        }
        trace.push(epoch_ll / prepared.len() as f64);
    }
    Ok(trace)
}

fn apply_ascent(model: &mut CrfModel, grads: &CrfGrads, lr: f64) {
    for (w, g) in model
        .emission
        .as_mut_slice()
        .iter_mut()
        .zip(grads.emission.as_slice())
    {
        *w += lr * g;
    }
    for (w, g) in model
        .transition
        .as_mut_slice()
        .iter_mut()
        .zip(grads.transition.as_slice())
    {
        *w += lr * g;
    }
    for (w, g) in model.start.iter_mut().zip(&grads.start) {
        *w += lr * g;
    }
}

/// Trainable weights in serialization order.
pub fn weight_count(model: &CrfModel) -> usize {
    model.emission.as_slice().len() + model.transition.as_slice().len() + model.start.len()
}

pub fn get_weight(model: &CrfModel, k: usize) -> f64 {
    let ne = model.emission.as_slice().len();
    let nt = model.transition.as_slice().len();
    if k < ne {
        model.emission.as_slice()[k]
    } else if k < ne + nt {
        model.transition.as_slice()[k - ne]
    } else {
        model.start[k - ne - nt]
    }
}

pub fn set_weight(model: &mut CrfModel, k: usize, v: f64) {
    let ne = model.emission.as_slice().len();
    let nt = model.transition.as_slice().len();
    if k < ne {
        model.emission.as_mut_slice()[k] = v;
    } else if k < ne + nt {
        model.transition.as_mut_slice()[k - ne] = v;
    } else {
        model.start[k - ne - nt] = v;
    }
}

pub fn flatten_grads(g: &CrfGrads) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(g.emission.as_slice());
    out.extend_from_slice(g.transition.as_slice());
    out.extend_from_slice(&g.start);
    out
}

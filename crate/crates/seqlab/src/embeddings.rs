//! Desk-scale skip-gram embedding training, word2vec text-format I/O, and
//! embedding-layer initialization.
//!
//! The trainer is skip-gram with negative sampling: each (center, context)
//! pair within a dynamic window is contrasted against words drawn from the
//! unigram distribution raised to 0.75. Corpus text is lowercased on
//! ingestion; training is sequential and bit-deterministic by seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix, Rng};
use crate::vocab::Vocabulary;

/// A vocabulary with one d-dimensional vector per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, vectors: Matrix) -> Self {
        assert_eq!(
            vocab.len(),
            vectors.rows(),
            "contract violation: one vector per vocabulary entry"
        );
        EmbeddingTable { vocab, vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.index_of(word).map(|i| self.vectors.row(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    /// Frequency threshold for subsampling very frequent words; 0 disables.
    pub subsample: f64,
    /// Shrink the window uniformly to 1..=window per position, as the
    /// original toolchain does; fixed window when false.
    pub dynamic_window: bool,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 200,
            window: 10,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            subsample: 0.0,
            dynamic_window: true,
            seed: 42,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.window < 1 || self.negatives < 1 {
            return Err(Error::contract(
                "skip-gram dim, window, and negatives must all be >= 1",
            ));
        }
        if self.epochs == 0 || !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::contract("epochs >= 1 and learning_rate > 0 required"));
        }
        Ok(())
    }
}

/// Full training result: center vectors (the embedding), the context-side
/// vectors, and the fixed-negative objective measured after each epoch.
#[derive(Debug, Clone)]
pub struct SkipGramOutcome {
    pub table: EmbeddingTable,
    pub context_vectors: Matrix,
    pub objective_trace: Vec<f64>,
}

/// Trains skip-gram with negative sampling and returns the center vectors.
pub fn train_skipgram(sentences: &[Vec<String>], config: &SkipGramConfig) -> Result<EmbeddingTable> {
    Ok(train_skipgram_full(sentences, config)?.table)
}

pub fn train_skipgram_full(
    sentences: &[Vec<String>],
    config: &SkipGramConfig,
) -> Result<SkipGramOutcome> {
    config.validate()?;

    // lowercase, count, apply min_count
    let lowered: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| t.to_lowercase()).collect())
        .collect();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for sent in &lowered {
        for tok in sent {
            match counts.iter_mut().find(|(w, _)| w == tok) {
                Some((_, c)) => *c += 1,
                None => counts.push((tok.clone(), 1)),
            }
        }
    }
    counts.retain(|(_, c)| *c >= config.min_count);
    if counts.is_empty() {
        return Err(Error::data_format(
            0,
            "no tokens survive the min_count filter",
        ));
    }
    // skip-gram vocabularies carry no unknown entry: build index directly
    let words: Vec<String> = counts.iter().map(|(w, _)| w.clone()).collect();
    let vocab = SkipGramVocab::new(&words);
    let freq: Vec<usize> = counts.iter().map(|(_, c)| *c).collect();
    let total_tokens: usize = freq.iter().sum();

    // ids per sentence, dropping filtered words
    let corpus_ids: Vec<Vec<usize>> = lowered
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.index_of(t)).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    if corpus_ids.is_empty() {
        return Err(Error::data_format(0, "corpus is empty after filtering"));
    }

    // negative-sampling distribution proportional to unigram^0.75
    let weights: Vec<f64> = freq.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let weight_sum = *cumulative.last().unwrap();

    let n = vocab.len();
    let rng = Rng::new(config.seed);
    let mut center = Matrix::fill_uniform(
        n,
        config.dim,
        -0.5 / config.dim as f64,
        0.5 / config.dim as f64,
        &mut rng.substream("sg.init"),
    );
    let mut context = Matrix::zeros(n, config.dim);

    let mut draw_negative = {
        let cumulative = cumulative.clone();
        move |r: &mut Rng| -> usize {
            let x = r.next_f64() * weight_sum;
            cumulative.partition_point(|&c| c <= x).min(n - 1)
        }
    };

    let mut trace = Vec::with_capacity(config.epochs);
    let total_updates = (config.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    for epoch in 0..config.epochs {
        let mut r = rng.substream_n("sg.epoch", epoch as u64);
        for sent in &corpus_ids {
            // subsample frequent words for this pass
            let kept: Vec<usize> = sent
                .iter()
                .copied()
                .filter(|&w| {
                    processed += 1;
                    if config.subsample <= 0.0 {
                        return true;
                    }
                    let f = freq[w] as f64 / total_tokens as f64;
                    let keep = (config.subsample / f).sqrt() + config.subsample / f;
                    keep >= 1.0 || r.next_f64() < keep
                })
                .collect();
            let alpha_base = config.learning_rate
                * (1.0 - processed as f64 / total_updates).max(1e-4);
            for (i, &w) in kept.iter().enumerate() {
                let b = if config.dynamic_window {
                    1 + r.next_below(config.window)
                } else {
                    config.window
                };
                let lo = i.saturating_sub(b);
                let hi = (i + b + 1).min(kept.len());
                for (j, &ctx) in kept.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    sgns_update(
                        &mut center,
                        &mut context,
                        w,
                        ctx,
                        config.negatives,
                        alpha_base,
                        &mut r,
                        &mut draw_negative,
                    );
                }
            }
        }
        trace.push(sgns_objective(
            &center,
            &context,
            &corpus_ids,
            config,
            &mut draw_negative,
        ));
    }

    Ok(SkipGramOutcome {
        table: EmbeddingTable::new(vocab.into_vocabulary(), center),
        context_vectors: context,
        objective_trace: trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn sgns_update(
    center: &mut Matrix,
    context: &mut Matrix,
    w: usize,
    ctx: usize,
    negatives: usize,
    alpha: f64,
    rng: &mut Rng,
    draw_negative: &mut impl FnMut(&mut Rng) -> usize,
) {
    let dim = center.cols();
    let mut center_err = vec![0.0; dim];
    for sample in 0..=negatives {
        let (target, label) = if sample == 0 {
            (ctx, 1.0)
        } else {
            let neg = draw_negative(rng);
            if neg == ctx {
                continue;
            }
            (neg, 0.0)
        };
        let score = sigmoid(dot(center.row(w), context.row(target)));
        let g = alpha * (label - score);
        let cw = center.row(w).to_vec();
        for (e, o) in center_err.iter_mut().zip(context.row(target)) {
            *e += g * o;
        }
        for (o, c) in context.row_mut(target).iter_mut().zip(&cw) {
            *o += g * c;
        }
    }
    for (c, e) in center.row_mut(w).iter_mut().zip(&center_err) {
        *c += e;
    }
}

/// Mean log-sigmoid objective over every in-window pair, with a fresh set
/// of sampled negatives; used to track training progress.
fn sgns_objective(
    center: &Matrix,
    context: &Matrix,
    corpus_ids: &[Vec<usize>],
    config: &SkipGramConfig,
    draw_negative: &mut impl FnMut(&mut Rng) -> usize,
) -> f64 {
    let mut r = Rng::new(config.seed).substream("sg.objective");
    let mut total = 0.0;
    let mut pairs = 0usize;
    for sent in corpus_ids {
        for (i, &w) in sent.iter().enumerate() {
            let lo = i.saturating_sub(config.window);
            let hi = (i + config.window + 1).min(sent.len());
            for (j, &ctx) in sent.iter().enumerate().take(hi).skip(lo) {
                if j == i {
                    continue;
                }
                let mut obj = ln_sigmoid(dot(center.row(w), context.row(ctx)));
                for _ in 0..config.negatives {
                    let neg = draw_negative(&mut r);
                    if neg == ctx {
                        continue;
                    }
                    obj += ln_sigmoid(-dot(center.row(w), context.row(neg)));
                }
                total += obj;
                pairs += 1;
            }
        }
    }
    total / pairs.max(1) as f64
}

fn ln_sigmoid(x: f64) -> f64 {
    // ln(sigmoid(x)) without overflow for large |x|
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

// Skip-gram vocabularies index observed words only (no reserved unknown).
struct SkipGramVocab {
    words: Vec<String>,
    index: std::collections::HashMap<String, usize>,
}

impl SkipGramVocab {
    fn new(words: &[String]) -> Self {
        SkipGramVocab {
            words: words.to_vec(),
            index: words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.words.len()
    }

    fn index_of(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    fn into_vocabulary(self) -> Vocabulary {
        Vocabulary::from_token_list(self.words)
    }
}

/// Reads the word2vec text format: a `<count> <dim>` header line then one
/// `word v1 ... v_dim` line per word. Parsing is locale-independent.
pub fn load_word2vec_text(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    parse_word2vec_text(&fs::read_to_string(path)?)
}

pub fn parse_word2vec_text(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data_format(1, "missing header line"))?;
    let mut parts = header.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => {
            let count: usize = c
                .parse()
                .map_err(|_| Error::data_format(1, format!("bad vocab count {c:?}")))?;
            let dim: usize = d
                .parse()
                .map_err(|_| Error::data_format(1, format!("bad dimension {d:?}")))?;
            (count, dim)
        }
        _ => return Err(Error::data_format(1, "header must be '<count> <dim>'")),
    };

    let mut words = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields
            .next()
            .ok_or_else(|| Error::data_format(lineno, "missing word"))?;
        let values: Vec<f64> = fields
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::data_format(lineno, format!("bad float {v:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::data_format(
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        words.push(word.to_string());
        data.extend_from_slice(&values);
    }
    if words.len() != count {
        return Err(Error::data_format(
            words.len() + 1,
            format!("header declares {count} rows, file has {}", words.len()),
        ));
    }
    Ok(EmbeddingTable::new(
        Vocabulary::from_token_list(words),
        Matrix::from_vec(count, dim, data),
    ))
}

/// Writes the exact format accepted by [`load_word2vec_text`], with 17
/// significant decimal digits so values survive the round trip bit-exactly.
pub fn save_word2vec_text(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{} {}", table.vocab.len(), table.dim())?;
    for i in 0..table.vocab.len() {
        write!(out, "{}", table.vocab.token_of(i))?;
        for v in table.vectors.row(i) {
            write!(out, " {v:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Builds an embedding matrix for `vocab`: rows whose lowercased token
/// appears in `pretrained` are copied verbatim; the rest are drawn uniform
/// in [-0.5/d, 0.5/d] from `seed`.
pub fn init_embedding_layer(vocab: &Vocabulary, pretrained: &EmbeddingTable, seed: u64) -> Matrix {
    let dim = pretrained.dim();
    let mut out = Matrix::zeros(vocab.len(), dim);
    let mut rng = Rng::new(seed).substream("embed.init");
    let bound = 0.5 / dim as f64;
    for i in 0..vocab.len() {
        let word = vocab.token_of(i).to_lowercase();
        match pretrained.vector(&word) {
            Some(v) => out.row_mut(i).copy_from_slice(v),
            None => {
                for x in out.row_mut(i) {
                    *x = rng.uniform(-bound, bound);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|s| s.split_whitespace().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn min_count_filters_everything_is_error() {
        let corpus = sentences(&["a b c"]);
        let cfg = SkipGramConfig {
            min_count: 5,
            dim: 4,
            window: 2,
            ..Default::default()
        };
        assert!(matches!(
            train_skipgram(&corpus, &cfg),
            Err(Error::DataFormat { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = sentences(&["the cat sat", "the dog sat", "a cat ran"]);
        let cfg = SkipGramConfig {
            dim: 8,
            window: 2,
            epochs: 3,
            ..Default::default()
        };
        let a = train_skipgram(&corpus, &cfg).unwrap();
        let b = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_skipgram(
            &corpus,
            &SkipGramConfig {
                seed: 43,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lowercases_on_ingestion() {
        let corpus = sentences(&["The THE the"]);
        let t = train_skipgram(
            &corpus,
            &SkipGramConfig {
                dim: 4,
                window: 2,
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.vocab.len(), 1);
        assert!(t.vector("the").is_some());
    }

    /// Synthetic corpus where two tokens share identical context multisets.
    pub(crate) fn identical_context_corpus() -> Vec<Vec<String>> {
        let mut raw: Vec<String> = Vec::new();
        let contexts = [
            ("take", "now"),
            ("give", "today"),
            ("hold", "later"),
            ("send", "soon"),
        ];
        for (l, r) in contexts {
            for _ in 0..12 {
                raw.push(format!("{l} alpha {r}"));
                raw.push(format!("{l} beta {r}"));
            }
        }
        // unrelated background words in varying company
        let others = [
            "oak", "pine", "fern", "moss", "reed", "sage", "iris", "lily", "rose", "dock",
        ];
        for i in 0..others.len() {
            for j in 0..others.len() {
                if i != j {
                    raw.push(format!("{} {} {}", others[i], others[j], others[(i + 3) % 10]));
                }
            }
        }
        sentences(&raw.iter().map(|s| s.as_str()).collect::<Vec<_>>())
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let na = dot(a, a).sqrt();
        let nb = dot(b, b).sqrt();
        dot(a, b) / (na * nb)
    }

    #[test]
    fn identical_contexts_produce_similar_vectors() {
        let corpus = identical_context_corpus();
        let cfg = SkipGramConfig {
            dim: 12,
            window: 2,
            negatives: 5,
            epochs: 20,
            learning_rate: 0.05,
            seed: 11,
            ..Default::default()
        };
        let out = train_skipgram_full(&corpus, &cfg).unwrap();
        let t = &out.table;
        let sim = cosine(t.vector("alpha").unwrap(), t.vector("beta").unwrap());

        let others = [
            "oak", "pine", "fern", "moss", "reed", "sage", "iris", "lily", "rose", "dock",
        ];
        let mut background = Vec::new();
        for i in 0..others.len() {
            for j in i + 1..others.len() {
                background.push(cosine(
                    t.vector(others[i]).unwrap(),
                    t.vector(others[j]).unwrap(),
                ));
            }
        }
        background.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95 = background[(background.len() as f64 * 0.95) as usize];
        assert!(sim > p95, "cosine(alpha,beta)={sim} vs 95th pct {p95}");

        // the objective improves over training
        let first = out.objective_trace.first().unwrap();
        let last = out.objective_trace.last().unwrap();
        assert!(last > first, "objective trace {:?}", out.objective_trace);
    }

    #[test]
    fn word2vec_text_roundtrip_is_bit_exact() {
        let corpus = sentences(&["north south east west", "north east", "south west up"]);
        let t = train_skipgram(
            &corpus,
            &SkipGramConfig {
                dim: 5,
                window: 2,
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        save_word2vec_text(&t, &path).unwrap();
        let loaded = load_word2vec_text(&path).unwrap();
        assert_eq!(t, loaded);
    }

    #[test]
    fn word2vec_text_parse_cases() {
        let t = parse_word2vec_text("2 3\nfoo 1.0 2.0 3.0\nbar -1 0.5 2e-3\n").unwrap();
        assert_eq!(t.vocab.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.vector("bar").unwrap()[2], 2e-3);

        match parse_word2vec_text("1 3\nfoo 1.0 2.0\n") {
            Err(Error::DataFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected arity error, got {other:?}"),
        }
        assert!(parse_word2vec_text("").is_err());
        assert!(parse_word2vec_text("x y\n").is_err());
        assert!(parse_word2vec_text("2 2\nfoo 1 2\n").is_err());
    }

    #[test]
    fn save_empty_and_single_word_tables() {
        let dir = tempfile::tempdir().unwrap();
        let empty = EmbeddingTable::new(Vocabulary::from_token_list(vec![]), Matrix::zeros(0, 3));
        let p = dir.path().join("empty.txt");
        save_word2vec_text(&empty, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "0 3\n");

        let one = EmbeddingTable::new(
            Vocabulary::from_token_list(vec!["solo".into()]),
            Matrix::from_vec(1, 2, vec![0.25, -1.5]),
        );
        let p = dir.path().join("one.txt");
        save_word2vec_text(&one, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        let loaded = load_word2vec_text(&p).unwrap();
        assert_eq!(loaded, one);
    }

    #[test]
    fn init_copies_covered_rows_and_seeds_the_rest() {
        let pretrained = EmbeddingTable::new(
            Vocabulary::from_token_list(vec!["aspirin".into(), "daily".into()]),
            Matrix::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, -2.0, -3.0, -4.0]),
        );
        let vocab = Vocabulary::from_tokens(["Aspirin", "unknownword", "daily"]);
        let m = init_embedding_layer(&vocab, &pretrained, 5);
        // "Aspirin" matches "aspirin" through lowercasing, copied verbatim
        let i = vocab.index_of("Aspirin").unwrap();
        assert_eq!(m.row(i), pretrained.vector("aspirin").unwrap());
        let j = vocab.index_of("daily").unwrap();
        assert_eq!(m.row(j), pretrained.vector("daily").unwrap());
        // uncovered rows (including <unk>) fall in the stated range
        let bound = 0.5 / 4.0;
        for row in [0, vocab.index_of("unknownword").unwrap()] {
            assert!(m.row(row).iter().all(|v| v.abs() <= bound));
            assert!(m.row(row).iter().any(|v| *v != 0.0));
        }
        // deterministic
        let m2 = init_embedding_layer(&vocab, &pretrained, 5);
        assert_eq!(m, m2);
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn table_shape_mismatch_panics() {
        EmbeddingTable::new(Vocabulary::from_token_list(vec!["a".into()]), Matrix::zeros(2, 3));
    }
}

//! Shared builders for unit tests: small models wired to a corpus's
//! vocabulary and tag set.

use crate::cells::CellKind;
use crate::corpus::Document;
use crate::crf::CrfModel;
use crate::model::{ModelConfig, SequenceModel};
use crate::numerics::{Matrix, Rng};
use crate::vocab::{TagSet, Vocabulary};

pub fn corpus_vocab(docs: &[Document]) -> Vocabulary {
    Vocabulary::from_tokens(
        docs.iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tokens.iter())
            .map(|t| t.to_lowercase()),
    )
}

pub fn corpus_tagset(docs: &[Document]) -> TagSet {
    TagSet::from_tags(
        docs.iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tags.iter().cloned()),
    )
}

pub fn random_embedding(vocab: &Vocabulary, dim: usize, seed: u64) -> Matrix {
    Matrix::fill_uniform(
        vocab.len(),
        dim,
        -0.5 / dim as f64,
        0.5 / dim as f64,
        &mut Rng::new(seed).substream("emb"),
    )
}

pub fn sequence_model_for_docs(
    docs: &[Document],
    kind: CellKind,
    hidden: usize,
    dim: usize,
    seed: u64,
) -> SequenceModel {
    let vocab = corpus_vocab(docs);
    let tagset = corpus_tagset(docs);
    let embedding = random_embedding(&vocab, dim, seed);
    SequenceModel::init(
        vocab,
        tagset,
        embedding,
        ModelConfig {
            cell_kind: kind,
            hidden,
            ..Default::default()
        },
        seed,
    )
}

pub fn crf_for_docs(docs: &[Document], dim: usize, context: bool, seed: u64) -> CrfModel {
    let vocab = corpus_vocab(docs);
    let tagset = corpus_tagset(docs);
    let embedding = random_embedding(&vocab, dim, seed);
    CrfModel::init(vocab, tagset, embedding, context)
}

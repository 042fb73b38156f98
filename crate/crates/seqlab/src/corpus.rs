//! Labeled-corpus ingestion, sentence/document sequencing, and synthetic
//! corpus generation.
//!
//! File dialect: one token per line as `token<TAB>tag` with exactly one
//! tab and no spaces inside tokens; a blank line ends a sentence; a line
//! beginning `-DOCSTART-` ends a document. UTF-8, LF or CRLF on read, LF
//! on write.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tagscheme::parse_tag;

/// One sentence (or, in document mode, one concatenated document) of
/// tokens with parallel BIO tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSequence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl TaggedSequence {
    pub fn new(tokens: Vec<String>, tags: Vec<String>) -> Self {
        assert_eq!(
            tokens.len(),
            tags.len(),
            "contract violation: token/tag count mismatch"
        );
        TaggedSequence { tokens, tags }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<TaggedSequence>,
}

/// Whether a model consumes one sentence or one whole document per
/// sequence. Document mode concatenates a document's sentences into one
/// unbroken chain with no boundary markers and no state reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqUnit {
    #[default]
    Sentence,
    Document,
}

impl SeqUnit {
    pub fn name(self) -> &'static str {
        match self {
            SeqUnit::Sentence => "sentence",
            SeqUnit::Document => "document",
        }
    }
}

impl FromStr for SeqUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(SeqUnit::Sentence),
            "document" => Ok(SeqUnit::Document),
            other => Err(Error::contract(format!("unknown sequence unit: {other:?}"))),
        }
    }
}

impl fmt::Display for SeqUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const DOCSTART: &str = "-DOCSTART-";

/// Parses CoNLL-style text into documents. Tags are validated as O, B-x,
/// or I-x; malformed lines fail with their 1-based line number.
pub fn parse_conll(text: &str) -> Result<Vec<Document>> {
    let mut docs: Vec<Document> = Vec::new();
    let mut sentences: Vec<TaggedSequence> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();

    let flush_sentence = |tokens: &mut Vec<String>, tags: &mut Vec<String>, sentences: &mut Vec<TaggedSequence>| {
        if !tokens.is_empty() {
            sentences.push(TaggedSequence::new(
                std::mem::take(tokens),
                std::mem::take(tags),
            ));
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            flush_sentence(&mut tokens, &mut tags, &mut sentences);
            continue;
        }
        if line.starts_with(DOCSTART) {
            flush_sentence(&mut tokens, &mut tags, &mut sentences);
            if !sentences.is_empty() {
                docs.push(Document {
                    id: format!("doc{}", docs.len()),
                    sentences: std::mem::take(&mut sentences),
                });
            }
            continue;
        }
        let mut parts = line.split('\t');
        let (token, tag) = match (parts.next(), parts.next(), parts.next()) {
            (Some(tok), Some(tag), None) => (tok, tag),
            (_, _, Some(_)) => {
                return Err(Error::data_format(lineno, "more than one tab on line"))
            }
            _ => return Err(Error::data_format(lineno, "expected token<TAB>tag")),
        };
        if token.is_empty() {
            return Err(Error::data_format(lineno, "empty token"));
        }
        if token.contains(' ') {
            return Err(Error::data_format(lineno, format!("space inside token {token:?}")));
        }
        if tag.is_empty() {
            return Err(Error::data_format(lineno, "empty tag"));
        }
        parse_tag(tag).map_err(|_| {
            Error::data_format(lineno, format!("tag outside BIO syntax: {tag:?}"))
        })?;
        tokens.push(token.to_string());
        tags.push(tag.to_string());
    }
    flush_sentence(&mut tokens, &mut tags, &mut sentences);
    if !sentences.is_empty() {
        docs.push(Document {
            id: format!("doc{}", docs.len()),
            sentences,
        });
    }
    Ok(docs)
}

pub fn load_conll(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    parse_conll(&fs::read_to_string(path)?)
}

/// Renders documents in the canonical form accepted by [`parse_conll`]:
/// LF line endings, blank line between sentences, `-DOCSTART-` plus a
/// blank line between documents, no trailing separator.
pub fn render_conll(docs: &[Document]) -> String {
    let mut out = String::new();
    for (di, doc) in docs.iter().enumerate() {
        if di > 0 {
            out.push('\n');
            out.push_str(DOCSTART);
            out.push_str("\n\n");
        }
        for (si, sent) in doc.sentences.iter().enumerate() {
            if si > 0 {
                out.push('\n');
            }
            for (tok, tag) in sent.tokens.iter().zip(&sent.tags) {
                out.push_str(tok);
                out.push('\t');
                out.push_str(tag);
                out.push('\n');
            }
        }
    }
    out
}

pub fn save_conll(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_conll(docs))?;
    Ok(())
}

/// Flattens documents into model-ready sequences by the given unit.
pub fn to_sequences(docs: &[Document], unit: SeqUnit) -> Vec<TaggedSequence> {
    match unit {
        SeqUnit::Sentence => docs
            .iter()
            .flat_map(|d| d.sentences.iter().cloned())
            .collect(),
        SeqUnit::Document => docs
            .iter()
            .filter(|d| !d.sentences.is_empty())
            .map(|d| {
                let mut tokens = Vec::new();
                let mut tags = Vec::new();
                for s in &d.sentences {
                    tokens.extend(s.tokens.iter().cloned());
                    tags.extend(s.tags.iter().cloned());
                }
                TaggedSequence::new(tokens, tags)
            })
            .collect(),
    }
}

/// Synthetic-corpus profile.
///
/// `Local`: every entity's label is readable off the token itself.
/// `LongDep`: most entities use ambiguous surface forms whose label is
/// determined by a trigger word 4-8 positions earlier in the document
/// stream, occasionally across a sentence boundary, so surrounding context
/// is required to label them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthProfile {
    Local,
    LongDep,
}

impl FromStr for SynthProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(SynthProfile::Local),
            "longdep" => Ok(SynthProfile::LongDep),
            other => Err(Error::contract(format!("unknown profile: {other:?}"))),
        }
    }
}

pub const SYNTH_LABELS: [&str; 4] = ["Drug", "Dose", "Symptom", "Freq"];

const FILLERS: [&str; 12] = [
    "the", "patient", "was", "and", "then", "noted", "on", "exam", "stable", "report", "visit",
    "continued",
];

const LOCAL_HEADS: [[&str; 4]; 4] = [
    ["aspirin", "ibuprofen", "metformin", "lisinopril"],
    ["10mg", "20mg", "5ml", "250mg"],
    ["nausea", "headache", "dizziness", "fatigue"],
    ["daily", "nightly", "weekly", "hourly"],
];

const LOCAL_CONTS: [&str; 4] = ["xr", "units", "episodes", "prn"];

// Ambiguous surface forms: used for every label with equal probability, so
// token identity alone carries no signal about the label.
const AMBIGUOUS: [&str; 4] = ["velar", "tosin", "merid", "kalpa"];
const AMBIGUOUS_CONT: &str = "plus";

// One trigger word per label, always tagged O.
const TRIGGERS: [&str; 4] = ["prescribed", "measured", "reported", "scheduled"];

const MIN_GAP: usize = 4;
const MAX_GAP: usize = 8;

/// Probability that a long-dependency trigger lands in the previous
/// sentence, making the mention unlabelable from its own sentence.
const CROSS_SENTENCE_P: f64 = 0.25;
/// Share of ambiguous (trigger-determined) entities in the longdep profile.
const LONGDEP_SHARE: f64 = 0.7;
/// Probability an entity spans two tokens.
const TWO_TOKEN_P: f64 = 0.3;

/// Generates a deterministic synthetic corpus with `sentences` sentences.
pub fn gen_synthetic(profile: SynthProfile, sentences: usize, seed: u64) -> Vec<Document> {
    assert!(sentences >= 1, "contract violation: sentences must be >= 1");
    let mut rng = Rng::new(seed).substream("synth");
    let mut docs = Vec::new();
    let mut total = 0usize;
    while total < sentences {
        let doc = gen_document(profile, &mut rng, docs.len());
        total += doc.sentences.len();
        docs.push(doc);
    }
    // trim trailing sentences to hit the requested count exactly; triggers
    // always precede their mentions, so dropping a suffix is safe
    let extra = total - sentences;
    if extra > 0 {
        let last = docs.last_mut().unwrap();
        last.sentences.truncate(last.sentences.len() - extra);
        if last.sentences.is_empty() {
            docs.pop();
        }
    }
    docs
}

fn gen_document(profile: SynthProfile, rng: &mut Rng, index: usize) -> Document {
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    // positions where a sentence break may or must start a new sentence
    let mut optional_cuts: Vec<usize> = Vec::new();
    let mut forced_cuts: Vec<usize> = Vec::new();

    let push_fillers = |tokens: &mut Vec<String>, tags: &mut Vec<String>, n: usize, rng: &mut Rng| {
        for _ in 0..n {
            tokens.push(FILLERS[rng.next_below(FILLERS.len())].to_string());
            tags.push("O".to_string());
        }
    };

    let groups = 2 + rng.next_below(3); // 2..=4 entities per document
    for g in 0..groups {
        if g > 0 {
            optional_cuts.push(tokens.len());
        }
        push_fillers(&mut tokens, &mut tags, 2 + rng.next_below(3), rng);

        let label_idx = rng.next_below(SYNTH_LABELS.len());
        let label = SYNTH_LABELS[label_idx];
        let long_dep = match profile {
            SynthProfile::Local => false,
            SynthProfile::LongDep => rng.next_f64() < LONGDEP_SHARE,
        };
        let two_token = rng.next_f64() < TWO_TOKEN_P;

        if long_dep {
            let trigger_pos = tokens.len();
            tokens.push(TRIGGERS[label_idx].to_string());
            tags.push("O".to_string());
            let gap = MIN_GAP + rng.next_below(MAX_GAP - MIN_GAP + 1);
            push_fillers(&mut tokens, &mut tags, gap - 1, rng);
            let cross = rng.next_f64() < CROSS_SENTENCE_P;
            if cross {
                // break somewhere strictly between trigger and mention
                forced_cuts.push(trigger_pos + 1 + rng.next_below(gap));
            }
            tokens.push(AMBIGUOUS[rng.next_below(AMBIGUOUS.len())].to_string());
            tags.push(format!("B-{label}"));
            if two_token {
                tokens.push(AMBIGUOUS_CONT.to_string());
                tags.push(format!("I-{label}"));
            }
        } else {
            let heads = LOCAL_HEADS[label_idx];
            tokens.push(heads[rng.next_below(heads.len())].to_string());
            tags.push(format!("B-{label}"));
            if two_token {
                tokens.push(LOCAL_CONTS[label_idx].to_string());
                tags.push(format!("I-{label}"));
            }
        }

        push_fillers(&mut tokens, &mut tags, 1 + rng.next_below(3), rng);
    }

    let mut cuts: Vec<usize> = forced_cuts;
    for c in optional_cuts {
        if rng.next_f64() < 0.5 {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut sentences = Vec::new();
    let mut start = 0usize;
    for cut in cuts.into_iter().chain(std::iter::once(tokens.len())) {
        if cut > start {
            sentences.push(TaggedSequence::new(
                tokens[start..cut].to_vec(),
                tags[start..cut].to_vec(),
            ));
            start = cut;
        }
    }
    Document {
        id: format!("doc{index}"),
        sentences,
    }
}

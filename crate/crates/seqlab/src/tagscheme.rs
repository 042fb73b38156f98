//! BIO tag encoding/decoding, entity-level micro-averaged evaluation, and
//! k-fold splitting.
//!
//! Decoding is total over syntactically valid tags: an I- tag with no
//! compatible open span is repaired to a B- tag (the widely used conlleval
//! convention), and a label change inside a run closes the previous span.
//! Evaluation uses exact span matching: a predicted span counts as a true
//! positive only when start, end, and label all match a gold span.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// A decoded typed span: token range [start, end) with an entity label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            label: label.into(),
        }
    }
}

/// Per-label counts for one entity type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LabelCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

// 0/0 is reported as 0 by convention.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Entity-level evaluation result; the headline numbers are micro-averaged
/// (counts pooled across labels before taking ratios). Token accuracy is
/// auxiliary only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: BTreeMap<String, LabelCounts>,
    pub token_accuracy: f64,
}

impl Metrics {
    pub fn from_counts(per_label: BTreeMap<String, LabelCounts>, token_accuracy: f64) -> Self {
        let tp: usize = per_label.values().map(|c| c.tp).sum();
        let fp: usize = per_label.values().map(|c| c.fp).sum();
        let fn_: usize = per_label.values().map(|c| c.fn_).sum();
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            per_label,
            token_accuracy,
        }
    }

    pub fn total_tp(&self) -> usize {
        self.per_label.values().map(|c| c.tp).sum()
    }
}

/// Encodes non-overlapping spans as a BIO tag sequence of `length` tokens.
pub fn bio_encode(spans: &[EntitySpan], length: usize) -> Result<Vec<String>> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::contract(format!(
                "overlapping spans: [{}, {}) and [{}, {})",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    let mut tags = vec!["O".to_string(); length];
    for s in sorted {
        if s.start >= s.end || s.end > length {
            return Err(Error::contract(format!(
                "invalid span [{}, {}) for length {length}",
                s.start, s.end
            )));
        }
        tags[s.start] = format!("B-{}", s.label);
        for t in tags.iter_mut().take(s.end).skip(s.start + 1) {
            *t = format!("I-{}", s.label);
        }
    }
    Ok(tags)
}

/// Splits a tag into its prefix and label, validating BIO syntax.
pub fn parse_tag(tag: &str) -> Result<Option<(char, &str)>> {
    if tag == "O" {
        return Ok(None);
    }
    match tag.split_once('-') {
        Some((p @ ("B" | "I"), label)) if !label.is_empty() => {
            Ok(Some((p.chars().next().unwrap(), label)))
        }
        _ => Err(Error::data_format(0, format!("tag outside BIO syntax: {tag:?}"))),
    }
}

/// Decodes a BIO tag sequence into spans, repairing malformed output:
/// an I-X with no open X span starts a new span.
pub fn bio_decode<S: AsRef<str>>(tags: &[S]) -> Result<Vec<EntitySpan>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match parse_tag(tag.as_ref())? {
            None => {
                if let Some((start, label)) = open.take() {
                    spans.push(EntitySpan::new(start, i, label));
                }
            }
            Some(('B', label)) => {
                if let Some((start, prev)) = open.take() {
                    spans.push(EntitySpan::new(start, i, prev));
                }
                open = Some((i, label.to_string()));
            }
            Some((_, label)) => match &open {
                Some((_, prev)) if prev == label => {}
                _ => {
                    // repair: orphan I-X behaves like B-X
                    if let Some((start, prev)) = open.take() {
                        spans.push(EntitySpan::new(start, i, prev));
                    }
                    open = Some((i, label.to_string()));
                }
            },
        }
    }
    if let Some((start, label)) = open {
        spans.push(EntitySpan::new(start, tags.len(), label));
    }
    Ok(spans)
}

/// Entity-level micro-averaged evaluation of predicted tag sequences
/// against gold ones. Both corpora are parallel lists of tag sequences;
/// lengths must agree sequence by sequence.
pub fn evaluate<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    predicted: &[Vec<T>],
) -> Result<Metrics> {
    if gold.len() != predicted.len() {
        return Err(Error::contract(format!(
            "sequence count mismatch: {} gold vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut per_label: BTreeMap<String, LabelCounts> = BTreeMap::new();
    let mut token_hits = 0usize;
    let mut token_total = 0usize;
    for (g, p) in gold.iter().zip(predicted) {
        if g.len() != p.len() {
            return Err(Error::contract(format!(
                "sequence length mismatch: {} gold vs {} predicted tokens",
                g.len(),
                p.len()
            )));
        }
        token_total += g.len();
        token_hits += g
            .iter()
            .zip(p)
            .filter(|(a, b)| a.as_ref() == b.as_ref())
            .count();

        let gold_spans = bio_decode(g)?;
        let pred_spans = bio_decode(p)?;
        for s in &pred_spans {
            let c = per_label.entry(s.label.clone()).or_default();
            if gold_spans.contains(s) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for s in &gold_spans {
            if !pred_spans.contains(s) {
                per_label.entry(s.label.clone()).or_default().fn_ += 1;
            }
        }
    }
    Ok(Metrics::from_counts(per_label, ratio(token_hits, token_total)))
}

/// Document-level k-fold assignment: returns `fold[i]` for each of
/// `n_documents`. Fold sizes differ by at most one; the permutation is
/// deterministic by seed.
pub fn kfold_split(n_documents: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::contract(format!("folds must be >= 2, got {folds}")));
    }
    if folds > n_documents {
        return Err(Error::contract(format!(
            "folds ({folds}) exceed document count ({n_documents})"
        )));
    }
    let mut order: Vec<usize> = (0..n_documents).collect();
    Rng::new(seed).substream("kfold").shuffle(&mut order);
    let mut assignment = vec![0usize; n_documents];
    for (pos, doc) in order.into_iter().enumerate() {
        assignment[doc] = pos % folds;
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_no_spans() {
        assert_eq!(bio_encode(&[], 3).unwrap(), vec!["O", "O", "O"]);
    }

    #[test]
    fn encode_simple_span() {
        let tags = bio_encode(&[EntitySpan::new(0, 2, "Drug")], 3).unwrap();
        assert_eq!(tags, vec!["B-Drug", "I-Drug", "O"]);
    }

    #[test]
    fn encode_adjacent_spans_disambiguate_with_b() {
        let spans = [EntitySpan::new(0, 1, "X"), EntitySpan::new(1, 2, "X")];
        assert_eq!(bio_encode(&spans, 2).unwrap(), vec!["B-X", "B-X"]);
    }

    #[test]
    fn encode_rejects_overlap() {
        let spans = [EntitySpan::new(0, 2, "X"), EntitySpan::new(1, 3, "Y")];
        assert!(matches!(bio_encode(&spans, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn decode_simple() {
        let spans = bio_decode(&["B-Drug", "I-Drug", "O"]).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(0, 2, "Drug")]);
    }

    #[test]
    fn decode_repairs_orphan_inside() {
        let spans = bio_decode(&["O", "I-Dose"]).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(1, 2, "Dose")]);
    }

    #[test]
    fn decode_repairs_label_change() {
        let spans = bio_decode(&["B-X", "I-Y"]).unwrap();
        assert_eq!(
            spans,
            vec![EntitySpan::new(0, 1, "X"), EntitySpan::new(1, 2, "Y")]
        );
    }

    #[test]
    fn decode_rejects_unknown_tag() {
        assert!(matches!(
            bio_decode(&["B-X", "Q-Y"]),
            Err(Error::DataFormat { .. })
        ));
        assert!(bio_decode(&["B-"]).is_err());
        assert!(bio_decode(&["b-X"]).is_err());
    }

    #[test]
    fn evaluate_perfect_prediction() {
        let gold = vec![vec!["B-A", "I-A", "O", "B-B"], vec!["O", "B-A", "O", "O"]];
        let m = evaluate(&gold, &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.token_accuracy, 1.0);
    }

    #[test]
    fn evaluate_no_predictions_degenerate() {
        let gold = vec![vec!["B-A", "O", "B-B", "B-A"]];
        let pred = vec![vec!["O", "O", "O", "O"]];
        let m = evaluate(&gold, &pred).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn evaluate_hand_counted_case() {
        // gold {(0,2,A),(3,4,B)}, predicted {(0,2,A),(3,5,B)}:
        // tp=1, fp=1, fn=1 so P=R=F=0.5
        let gold = vec![vec!["B-A", "I-A", "O", "B-B", "O"]];
        let pred = vec![vec!["B-A", "I-A", "O", "B-B", "I-B"]];
        let m = evaluate(&gold, &pred).unwrap();
        assert_eq!(m.total_tp(), 1);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn evaluate_rejects_length_mismatch() {
        let gold = vec![vec!["O", "O"]];
        let pred = vec![vec!["O"]];
        assert!(matches!(evaluate(&gold, &pred), Err(Error::Contract(_))));
    }

    #[test]
    fn evaluate_swap_symmetry() {
        let gold = vec![vec!["B-A", "I-A", "O", "B-B", "O", "B-A"]];
        let pred = vec![vec!["B-A", "O", "B-C", "B-B", "I-B", "O"]];
        let m1 = evaluate(&gold, &pred).unwrap();
        let m2 = evaluate(&pred, &gold).unwrap();
        assert_eq!(m1.total_tp(), m2.total_tp());
        let fp1: usize = m1.per_label.values().map(|c| c.fp).sum();
        let fn2: usize = m2.per_label.values().map(|c| c.fn_).sum();
        assert_eq!(fp1, fn2);
        assert!((m1.precision - m2.recall).abs() < 1e-15);
    }

    #[test]
    fn micro_f_is_harmonic_mean() {
        let gold = vec![vec!["B-A", "O", "B-B", "O", "B-A", "I-A"]];
        let pred = vec![vec!["B-A", "B-B", "O", "O", "B-A", "O"]];
        let m = evaluate(&gold, &pred).unwrap();
        if m.precision + m.recall > 0.0 {
            let expected = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            assert!((m.f1 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn kfold_even_split() {
        let a = kfold_split(10, 5, 1).unwrap();
        let mut sizes = [0usize; 5];
        for f in &a {
            sizes[*f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 2));
    }

    #[test]
    fn kfold_leave_one_out() {
        let a = kfold_split(4, 4, 9).unwrap();
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kfold_deterministic_and_near_equal() {
        assert_eq!(kfold_split(23, 10, 7).unwrap(), kfold_split(23, 10, 7).unwrap());
        let a = kfold_split(23, 10, 7).unwrap();
        let mut sizes = [0usize; 10];
        for f in &a {
            sizes[*f] += 1;
        }
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(max - min <= 1);
    }

    #[test]
    fn kfold_rejects_bad_counts() {
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(kfold_split(3, 4, 0).is_err());
    }

    // Random non-overlapping span sets for the round-trip property.
    fn arb_spans() -> impl Strategy<Value = (Vec<EntitySpan>, usize)> {
        (1usize..40).prop_flat_map(|len| {
            let labels = prop::sample::select(vec!["Drug", "Dose", "Symptom", "Freq"]);
            let span = (0..len, 1usize..4, labels).prop_map(move |(start, w, label)| {
                EntitySpan::new(start, (start + w).min(len), label)
            });
            (prop::collection::vec(span, 0..8), Just(len)).prop_map(|(mut spans, len)| {
                spans.sort();
                let mut out: Vec<EntitySpan> = Vec::new();
                for s in spans {
                    if s.start < s.end && out.last().is_none_or(|p| p.end <= s.start) {
                        out.push(s);
                    }
                }
                (out, len)
            })
        })
    }

    proptest! {
        #[test]
        fn bio_roundtrip((spans, len) in arb_spans()) {
            let tags = bio_encode(&spans, len).unwrap();
            let decoded = bio_decode(&tags).unwrap();
            prop_assert_eq!(decoded, spans);
        }

        #[test]
        fn bio_decode_total_on_valid_tags(tags in prop::collection::vec(
            prop::sample::select(vec!["O", "B-X", "I-X", "B-Y", "I-Y"]), 0..30)) {
            let spans = bio_decode(&tags).unwrap();
            // spans are well-formed and non-overlapping
            for w in spans.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &spans {
                prop_assert!(s.start < s.end && s.end <= tags.len());
            }
        }
    }
}

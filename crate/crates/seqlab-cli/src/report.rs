//! Metrics rendering: the text report and the machine-readable JSON
//! document {precision, recall, f1, per_label, config}.

use seqlab::tagscheme::Metrics;
use serde_json::{json, Value};

/// The evaluation conventions, labeled in every report: exact span
/// matching, 0/0 ratios reported as 0, and conlleval-style BIO repair.
pub fn eval_config(folds: Option<usize>) -> Value {
    json!({
        "scheme": "BIO",
        "span_match": "exact",
        "zero_denominator": "reported as 0",
        "decode_repair": "conlleval (orphan I-X starts a span)",
        "folds": folds,
    })
}

pub fn metrics_json(m: &Metrics, config: Value) -> Value {
    let per_label: serde_json::Map<String, Value> = m
        .per_label
        .iter()
        .map(|(label, c)| {
            (
                label.clone(),
                json!({
                    "precision": c.precision(),
                    "recall": c.recall(),
                    "f1": c.f1(),
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn_,
                }),
            )
        })
        .collect();
    json!({
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "per_label": per_label,
        "token_accuracy": m.token_accuracy,
        "config": config,
    })
}

pub fn metrics_text(m: &Metrics) -> String {
    let mut out = String::new();
    out.push_str("entity-level micro-average (exact span match; 0/0 reported as 0)\n");
    out.push_str(&format!("precision      {:.4}\n", m.precision));
    out.push_str(&format!("recall         {:.4}\n", m.recall));
    out.push_str(&format!("f1             {:.4}\n", m.f1));
    out.push_str(&format!(
        "token accuracy {:.4} (auxiliary)\n",
        m.token_accuracy
    ));
    if !m.per_label.is_empty() {
        out.push_str("per label:\n");
        for (label, c) in &m.per_label {
            out.push_str(&format!(
                "  {label:<12} P {:.4}  R {:.4}  F {:.4}  (tp {} fp {} fn {})\n",
                c.precision(),
                c.recall(),
                c.f1(),
                c.tp,
                c.fp,
                c.fn_
            ));
        }
    }
    out
}

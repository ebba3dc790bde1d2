//! Ranks the tokens `[CLS]` attends to in the last layer, per class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::{CLS, SEP};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{argmax, ForwardTrace, Real};
use crate::pipeline::TrainedModel;
use crate::tokenizer::{decode_with_positions, EncodedInput, Vocab};

/// Tokens never reported.
pub const EXCLUDED_TOKENS: [&str; 4] = [CLS, SEP, ",", "."];

/// Per-word `[CLS]` attention for one input: last layer, summed over
/// heads, each weight multiplied by the real length, subword pieces
/// summed into their word. Repeated words accumulate.
pub fn cls_attention_scores<T: Real>(
    trace: &ForwardTrace<T>,
    input: &EncodedInput,
    vocab: &Vocab,
) -> Result<BTreeMap<String, f64>> {
    let last = trace
        .attentions
        .last()
        .filter(|heads| !heads.is_empty())
        .ok_or_else(|| Error::Invariant("trace holds no attention maps".into()))?;
    let n = last[0].len;
    let weight = |pos: usize| -> f64 {
        if input.attention_mask.get(pos) != Some(&1) {
            return 0.0;
        }
        last.iter().map(|head| head.get(0, pos).as_f64()).sum::<f64>() * n as f64
    };
    let mut scores = BTreeMap::new();
    for (word, positions) in decode_with_positions(&input.ids[..n.min(input.ids.len())], vocab) {
        if positions.contains(&0) {
            continue;
        }
        let s: f64 = positions.iter().map(|&p| weight(p)).sum();
        *scores.entry(word).or_insert(0.0) += s;
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAttention {
    pub label: String,
    pub instances: usize,
    pub scores: BTreeMap<String, f64>,
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub classes: Vec<ClassAttention>,
    pub excluded: Vec<String>,
    pub k: usize,
}

impl AttentionSummary {
    pub fn class(&self, label: &str) -> Option<&ClassAttention> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// One row per class listing its top tokens.
    pub fn to_table(&self) -> String {
        let width = self.classes.iter().map(|c| c.label.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<width$} top-{} most attended tokens\n", "IS class", self.k);
        for c in &self.classes {
            let tokens: Vec<&str> = c.top.iter().map(|(t, _)| t.as_str()).collect();
            out.push_str(&format!("{:<width$} {}\n", c.label, tokens.join(", ")));
        }
        out
    }
}

/// Sorts descending by score, ties by token.
pub fn top_k(scores: &BTreeMap<String, f64>, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = scores.iter().map(|(t, s)| (t.clone(), *s)).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Sums per-instance scores by class, drops excluded tokens and ranks.
/// Classes are reported in `labels` order.
pub fn aggregate_attention<'a>(
    instances: impl IntoIterator<Item = (&'a str, &'a BTreeMap<String, f64>)>,
    labels: &[String],
    k: usize,
) -> AttentionSummary {
    let mut per_class: Vec<(usize, BTreeMap<String, f64>)> = vec![(0, BTreeMap::new()); labels.len()];
    for (label, scores) in instances {
        let Some(i) = labels.iter().position(|l| l == label) else { continue };
        per_class[i].0 += 1;
        for (tok, s) in scores {
            if !EXCLUDED_TOKENS.contains(&tok.as_str()) {
                *per_class[i].1.entry(tok.clone()).or_insert(0.0) += s;
            }
        }
    }
    let classes = labels
        .iter()
        .zip(per_class)
        .map(|(label, (instances, scores))| ClassAttention {
            label: label.clone(),
            instances,
            top: top_k(&scores, k),
            scores,
        })
        .collect();
    AttentionSummary { classes, excluded: EXCLUDED_TOKENS.iter().map(|s| s.to_string()).collect(), k }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    #[default]
    Gold,
    Predicted,
}

/// Runs `model` over `corpus` and aggregates its `[CLS]` attention. For
/// multi-window mentions the window scores are averaged.
pub fn probe_model(model: &TrainedModel, corpus: &Corpus, k: usize, grouping: Grouping) -> Result<AttentionSummary> {
    let instances = model.encode(corpus)?;
    if instances.is_empty() {
        return Err(Error::Invariant("no mentions to probe".into()));
    }
    let labels = model.scheme.labels();
    let mut rows: Vec<(String, BTreeMap<String, f64>)> = Vec::with_capacity(instances.len());
    for inst in &instances {
        let mut merged = BTreeMap::new();
        let mut logits = vec![0.0f64; labels.len()];
        for enc in &inst.encoded {
            let trace = model.params.forward(enc, None)?;
            for (acc, v) in logits.iter_mut().zip(&trace.logits) {
                *acc += *v as f64;
            }
            for (tok, s) in cls_attention_scores(&trace, enc, &model.vocab)? {
                *merged.entry(tok).or_insert(0.0) += s / inst.encoded.len() as f64;
            }
        }
        let class = match grouping {
            Grouping::Gold => inst.label,
            Grouping::Predicted => argmax(&logits),
        };
        rows.push((labels[class].clone(), merged));
    }
    Ok(aggregate_attention(rows.iter().map(|(l, s)| (l.as_str(), s)), labels, k))
}

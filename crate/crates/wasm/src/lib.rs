//! Browser bindings. Each export takes and returns JSON strings; the
//! plain functions below them are what the bindings call and what the
//! tests exercise natively.
//!
//! Documents are typed one sentence per line with mentions in square
//! brackets. The last bracketed mention of the last line is the target.

use std::cell::RefCell;

use infostat::context::{build_pseudo_sentence, compute_overlap, ContextConfig, TokenRole};
use infostat::corpus::{gen_synthetic, guess_head, is_pronoun_word, split_kfold, Document, Mention, Sentence, SyntheticConfig};
use infostat::eval::score_indices;
use infostat::model::{argmax, ModelConfig, TrainConfig};
use infostat::pipeline::{Settings, TrainedModel};
use infostat::probe::{probe_model, Grouping, EXCLUDED_TOKENS};
use infostat::tokenizer::{decode_with_positions, encode};
use infostat::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

thread_local! {
    static MODEL: RefCell<Option<TrainedModel>> = const { RefCell::new(None) };
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub mention: bool,
    pub local: bool,
    pub overlap: bool,
    pub prev_sents: usize,
    pub max_tokens: usize,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { mention: true, local: true, overlap: true, prev_sents: 0, max_tokens: 128 }
    }
}

impl Toggles {
    fn context(&self) -> ContextConfig {
        ContextConfig {
            include_mention: self.mention,
            include_local_context: self.local,
            include_overlap: self.overlap,
            extra_prev_sentences: self.prev_sents,
            max_tokens: self.max_tokens,
            ..ContextConfig::default()
        }
    }
}

fn split_line(line: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(line.len() * 2);
    for c in line.chars() {
        if matches!(c, '[' | ']' | ',' | '.' | '?' | '!' | ';') {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Parses bracket-marked text into a document and the target mention id.
pub fn parse_document(text: &str) -> Result<(Document, String)> {
    let mut sentences = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let index = sentences.len();
        let mut tokens = Vec::new();
        let mut mentions = Vec::new();
        let mut open = None;
        for tok in split_line(line) {
            match tok.as_str() {
                "[" if open.is_some() => return Err(Error::Config(format!("line {}: nested brackets", index + 1))),
                "[" => open = Some(tokens.len()),
                "]" => {
                    let start = open.take().ok_or_else(|| Error::Config(format!("line {}: unmatched ]", index + 1)))?;
                    if start == tokens.len() {
                        return Err(Error::Config(format!("line {}: empty mention", index + 1)));
                    }
                    let span: &[String] = &tokens[start..];
                    mentions.push(Mention {
                        mention_id: format!("s{index}m{}", mentions.len()),
                        start,
                        end: tokens.len(),
                        head: start + guess_head(span),
                        is_pronoun: span.len() == 1 && is_pronoun_word(&span[0]),
                        label: "new".into(),
                    });
                }
                _ => tokens.push(tok),
            }
        }
        if open.is_some() {
            return Err(Error::Config(format!("line {}: unclosed [", index + 1)));
        }
        sentences.push(Sentence { index, tokens, mentions });
    }
    let target = sentences
        .last()
        .and_then(|s| s.mentions.last())
        .map(|m| m.mention_id.clone())
        .ok_or_else(|| Error::Config("mark the target mention in the last line with [brackets]".into()))?;
    Ok((Document { doc_id: "demo".into(), sentences }, target))
}

#[derive(Serialize)]
struct TokenView {
    token: String,
    role: TokenRole,
    segment: u8,
}

/// The pseudo sentence for the target mention under the given toggles.
pub fn pseudo_sentence_json(text: &str, toggles: &str) -> Result<String> {
    let toggles: Toggles = parse_options(toggles)?;
    let context = toggles.context();
    context.validate()?;
    let (doc, target) = parse_document(text)?;
    let (_, mention) = doc.find_mention(&target).expect("target exists");
    let overlap = compute_overlap(mention, &doc)?;
    let ps = build_pseudo_sentence(mention, &doc, &context)?;
    let tokens: Vec<TokenView> = ps
        .tokens
        .iter()
        .zip(&ps.roles)
        .zip(&ps.segment_ids)
        .map(|((t, r), s)| TokenView { token: t.clone(), role: *r, segment: *s })
        .collect();
    Ok(json!({
        "tokens": tokens,
        "length": ps.len(),
        "string_overlap": overlap.string_overlap.as_str(),
        "head_overlap": overlap.head_overlap.as_str(),
    })
    .to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DemoOptions {
    pub docs: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self { docs: 12, epochs: 8, seed: 1 }
    }
}

fn parse_options<T: for<'de> Deserialize<'de> + Default>(s: &str) -> Result<T> {
    if s.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(s).map_err(|e| Error::Config(format!("options: {e}")))
}

/// A small settings preset that trains in seconds.
pub fn demo_settings(seed: u64, epochs: usize) -> Settings {
    Settings {
        context: ContextConfig { max_tokens: 64, ..ContextConfig::default() },
        model: ModelConfig { layers: 1, heads: 2, hidden: 32, ff: 64, seed, ..ModelConfig::default() },
        train: TrainConfig { epochs, learning_rate: 3e-3, batch_size: 16, seed, ..TrainConfig::default() },
        vocab_size: 400,
    }
}

/// Generates a synthetic corpus, trains on 4/5 of its documents, scores
/// the rest and probes the held-out attention. Keeps the model for
/// [`classify_json`].
pub fn train_demo_json(options: &str) -> Result<String> {
    let o: DemoOptions = parse_options(options)?;
    if o.docs < 2 {
        return Err(Error::Config("need at least 2 documents".into()));
    }
    let corpus = gen_synthetic(&SyntheticConfig::small(o.docs, 12), o.seed)?;
    let folds = split_kfold(&corpus, o.docs.min(5), o.seed)?;
    let (train, test) = (corpus.subset(&folds[0].train), corpus.subset(&folds[0].test));
    let (model, log) = TrainedModel::fit(&train, &demo_settings(o.seed, o.epochs))?;
    let predicted = model.predict(&test)?;
    let gold: Vec<usize> = test
        .documents
        .iter()
        .flat_map(|d| d.mentions())
        .map(|(_, m)| test.scheme.index_of(&m.label).expect("label in scheme"))
        .collect();
    let metrics = score_indices(&predicted, &gold, test.scheme.labels())?;
    let probe = probe_model(&model, &test, 5, Grouping::Gold)?;
    let out = json!({
        "train_mentions": train.mention_count(),
        "test_mentions": test.mention_count(),
        "loss": log.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>(),
        "accuracy": metrics.accuracy,
        "table": metrics.to_table(),
        "probe": probe.classes.iter().map(|c| json!({"label": c.label, "top": c.top})).collect::<Vec<_>>(),
        "example": example_text(&test),
    });
    MODEL.with(|m| *m.borrow_mut() = Some(model));
    Ok(out.to_string())
}

/// Bracket-marked text for the last mention of a document's first
/// sentences, to seed the classify box.
fn example_text(corpus: &infostat::corpus::Corpus) -> String {
    let Some(doc) = corpus.documents.first() else { return String::new() };
    let last = doc.sentences.iter().take(4).rposition(|s| !s.mentions.is_empty()).unwrap_or(0);
    doc.sentences[..=last]
        .iter()
        .map(|s| {
            let mut words: Vec<String> = s.tokens.clone();
            for m in s.mentions.iter().rev() {
                words[m.end - 1].push(']');
                words[m.start].insert(0, '[');
            }
            words.join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Labels the target mention with the trained model and reports the
/// per-word `[CLS]` attention of its last layer.
pub fn classify_json(text: &str) -> Result<String> {
    MODEL.with(|cell| {
        let guard = cell.borrow();
        let model = guard.as_ref().ok_or_else(|| Error::Config("train a model first".into()))?;
        classify_with(model, text)
    })
}

pub fn classify_with(model: &TrainedModel, text: &str) -> Result<String> {
    let (doc, target) = parse_document(text)?;
    let (_, mention) = doc.find_mention(&target).expect("target exists");
    let ps = build_pseudo_sentence(mention, &doc, &model.context)?;
    let input = encode(&ps, &model.vocab, model.context.max_tokens)?;
    let trace = model.params.forward(&input, None)?;
    let logits: Vec<f64> = trace.logits.iter().map(|&v| v as f64).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let last = trace.attentions.last().ok_or_else(|| Error::Invariant("model has no layers".into()))?;
    let n = last[0].len;
    let words: Vec<_> = decode_with_positions(&input.ids[..n], &model.vocab)
        .into_iter()
        .map(|(word, positions)| {
            let w: f64 = positions.iter().map(|&p| last.iter().map(|h| h.get(0, p) as f64).sum::<f64>()).sum();
            let excluded = EXCLUDED_TOKENS.contains(&word.as_str());
            json!({"word": word, "attention": w * n as f64, "excluded": excluded})
        })
        .collect();
    let labels = model.scheme.labels();
    Ok(json!({
        "label": labels[argmax(&logits)],
        "probabilities": labels.iter().zip(&exp).map(|(l, e)| json!({"label": l, "p": e / z})).collect::<Vec<_>>(),
        "words": words,
    })
    .to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn pseudo_sentence(text: &str, toggles: &str) -> std::result::Result<String, JsError> {
    js(pseudo_sentence_json(text, toggles))
}

#[wasm_bindgen]
pub fn train_demo(options: &str) -> std::result::Result<String, JsError> {
    js(train_demo_json(options))
}

#[wasm_bindgen]
pub fn classify(text: &str) -> std::result::Result<String, JsError> {
    js(classify_json(text))
}

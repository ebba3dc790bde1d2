//! Annotated discourse data model, the line-delimited corpus format, label
//! statistics and document-level fold assignment.
//!
//! A corpus file is UTF-8 with one JSON record per line. The first non-empty
//! line declares the label scheme (`{"scheme_name": .., "labels": [..]}`);
//! every following line is one document. An empty file is an empty corpus
//! under the default eight-class scheme.

mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{gen_synthetic, SyntheticConfig};

/// The eight fine-grained classes, in the order used for reports.
pub const ISNOTES_LABELS: [&str; 8] = [
    "old",
    "m/worldKnowledge",
    "m/syntactic",
    "m/aggregate",
    "m/function",
    "m/comparative",
    "m/bridging",
    "new",
];

/// Closed class of English personal, possessive and demonstrative pronouns.
pub const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his",
    "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our", "ours",
    "ourselves", "they", "them", "their", "theirs", "themselves", "this", "that", "these",
    "those",
];

const HEAD_STOPPERS: &[&str] = &["of", "in", "that", "which", "who", "whom", "whose"];

pub fn is_pronoun_word(word: &str) -> bool {
    let lower = word.to_lowercase();
    PRONOUNS.contains(&lower.as_str())
}

/// Fallback head finder: the last alphabetic token before the first
/// post-modifier marker; the last token before the marker if none is
/// alphabetic. Returns an offset relative to the span start.
pub fn guess_head(span: &[String]) -> usize {
    let cut = span
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, t)| HEAD_STOPPERS.contains(&t.to_lowercase().as_str()))
        .map(|(i, _)| i)
        .unwrap_or(span.len());
    let cut = cut.max(1);
    span[..cut]
        .iter()
        .rposition(|t| t.chars().any(char::is_alphabetic) && t.chars().all(|c| c.is_alphabetic() || c == '-' || c == '.'))
        .unwrap_or(cut - 1)
}

#[derive(Debug, Clone)]
pub struct LabelScheme {
    name: String,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelScheme {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Invariant("label scheme has no labels".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Invariant(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            labels,
            index,
        })
    }

    pub fn isnotes() -> Self {
        Self::new("isnotes", ISNOTES_LABELS.iter().map(|s| s.to_string()).collect())
            .expect("static scheme is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

impl PartialEq for LabelScheme {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.labels == other.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub start: usize,
    pub end: usize,
    pub head: usize,
    pub is_pronoun: bool,
    pub label: String,
}

impl Mention {
    pub fn span<'a>(&self, sentence: &'a Sentence) -> &'a [String] {
        &sentence.tokens[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// Locates a mention by id, returning (sentence index, mention).
    pub fn find_mention(&self, mention_id: &str) -> Option<(usize, &Mention)> {
        self.sentences.iter().find_map(|s| {
            s.mentions
                .iter()
                .find(|m| m.mention_id == mention_id)
                .map(|m| (s.index, m))
        })
    }

    pub fn mentions(&self) -> impl Iterator<Item = (&Sentence, &Mention)> {
        self.sentences
            .iter()
            .flat_map(|s| s.mentions.iter().map(move |m| (s, m)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub scheme: LabelScheme,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, checking every record invariant.
    pub fn new(scheme: LabelScheme, documents: Vec<Document>) -> Result<Self> {
        let corpus = Self { scheme, documents };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn mention_count(&self) -> usize {
        self.documents
            .iter()
            .map(|d| d.sentences.iter().map(|s| s.mentions.len()).sum::<usize>())
            .sum()
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Sub-corpus holding the given documents, in corpus order.
    pub fn subset(&self, doc_ids: &[String]) -> Corpus {
        let keep: HashSet<&str> = doc_ids.iter().map(String::as_str).collect();
        Corpus {
            scheme: self.scheme.clone(),
            documents: self
                .documents
                .iter()
                .filter(|d| keep.contains(d.doc_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut doc_ids = HashSet::new();
        let mut mention_ids = HashSet::new();
        for doc in &self.documents {
            if !doc_ids.insert(doc.doc_id.as_str()) {
                return Err(Error::Invariant(format!("duplicate doc_id {:?}", doc.doc_id)));
            }
            validate_document(doc, &self.scheme, &mut mention_ids)?;
        }
        Ok(())
    }
}

fn validate_document<'a>(
    doc: &'a Document,
    scheme: &LabelScheme,
    mention_ids: &mut HashSet<&'a str>,
) -> Result<()> {
    for (i, sent) in doc.sentences.iter().enumerate() {
        if sent.index != i {
            return Err(Error::Invariant(format!(
                "document {:?}: sentence index {} at position {i}",
                doc.doc_id, sent.index
            )));
        }
        let mut spans = HashSet::new();
        for m in &sent.mentions {
            let id = &m.mention_id;
            if m.start >= m.end {
                return Err(Error::Invariant(format!(
                    "mention {id:?}: start {} is not before end {}",
                    m.start, m.end
                )));
            }
            if m.end > sent.tokens.len() {
                return Err(Error::Invariant(format!(
                    "mention {id:?}: span [{}, {}) exceeds sentence length {}",
                    m.start,
                    m.end,
                    sent.tokens.len()
                )));
            }
            if m.head < m.start || m.head >= m.end {
                return Err(Error::Invariant(format!(
                    "mention {id:?}: head {} outside span [{}, {})",
                    m.head, m.start, m.end
                )));
            }
            if scheme.index_of(&m.label).is_none() {
                return Err(Error::Invariant(format!(
                    "mention {id:?}: unknown label {:?}",
                    m.label
                )));
            }
            if !spans.insert((m.start, m.end)) {
                return Err(Error::Invariant(format!(
                    "mention {id:?}: duplicate span [{}, {})",
                    m.start, m.end
                )));
            }
            if !mention_ids.insert(id.as_str()) {
                return Err(Error::Invariant(format!("duplicate mention_id {id:?}")));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    scheme_name: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    doc_id: String,
    sentences: Vec<SentenceRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    tokens: Vec<String>,
    #[serde(default)]
    mentions: Vec<MentionRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MentionRecord {
    mention_id: String,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    is_pronoun: Option<bool>,
    label: String,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// Parses corpus text. Any violation rejects the whole input.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut scheme: Option<LabelScheme> = None;
    let mut documents = Vec::new();
    let mut doc_ids = HashSet::new();
    let mut mention_ids: HashSet<String> = HashSet::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some(scheme) = scheme.as_ref() else {
            let header: HeaderRecord =
                serde_json::from_str(line).map_err(|e| Error::Schema {
                    line: line_no,
                    reason: format!("bad scheme header: {e}"),
                })?;
            scheme = Some(
                LabelScheme::new(header.scheme_name, header.labels).map_err(|e| Error::Schema {
                    line: line_no,
                    reason: e.to_string(),
                })?,
            );
            continue;
        };
        let record: DocumentRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: line_no,
            reason: e.to_string(),
        })?;
        let doc = document_from_record(record);
        if !doc_ids.insert(doc.doc_id.clone()) {
            return Err(Error::Invariant(format!(
                "line {line_no}: duplicate doc_id {:?}",
                doc.doc_id
            )));
        }
        let mut local_ids = HashSet::new();
        validate_document(&doc, scheme, &mut local_ids)
            .map_err(|e| Error::Invariant(format!("line {line_no}: {}", strip_prefix(&e))))?;
        for id in local_ids {
            if !mention_ids.insert(id.to_string()) {
                return Err(Error::Invariant(format!(
                    "line {line_no}: duplicate mention_id {id:?}"
                )));
            }
        }
        documents.push(doc);
    }

    Ok(Corpus {
        scheme: scheme.unwrap_or_else(LabelScheme::isnotes),
        documents,
    })
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Invariant(msg) => msg.clone(),
        other => other.to_string(),
    }
}

fn document_from_record(record: DocumentRecord) -> Document {
    let sentences = record
        .sentences
        .into_iter()
        .enumerate()
        .map(|(index, s)| {
            let mentions = s
                .mentions
                .into_iter()
                .map(|m| {
                    let span_ok = m.start < m.end && m.end <= s.tokens.len();
                    let head = m.head.unwrap_or_else(|| {
                        if span_ok {
                            m.start + guess_head(&s.tokens[m.start..m.end])
                        } else {
                            m.start
                        }
                    });
                    let is_pronoun = m.is_pronoun.unwrap_or_else(|| {
                        span_ok && m.end - m.start == 1 && is_pronoun_word(&s.tokens[m.start])
                    });
                    Mention {
                        mention_id: m.mention_id,
                        start: m.start,
                        end: m.end,
                        head,
                        is_pronoun,
                        label: m.label,
                    }
                })
                .collect();
            Sentence {
                index,
                tokens: s.tokens,
                mentions,
            }
        })
        .collect();
    Document {
        doc_id: record.doc_id,
        sentences,
    }
}

/// Serializes a corpus in the line-delimited format, one document per line.
pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    let header = HeaderRecord {
        scheme_name: corpus.scheme.name().to_string(),
        labels: corpus.scheme.labels().to_vec(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for doc in &corpus.documents {
        let record = DocumentRecord {
            doc_id: doc.doc_id.clone(),
            sentences: doc
                .sentences
                .iter()
                .map(|s| SentenceRecord {
                    tokens: s.tokens.clone(),
                    mentions: s
                        .mentions
                        .iter()
                        .map(|m| MentionRecord {
                            mention_id: m.mention_id.clone(),
                            start: m.start,
                            end: m.end,
                            head: Some(m.head),
                            is_pronoun: Some(m.is_pronoun),
                            label: m.label.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, corpus_to_string(corpus)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub documents: usize,
    pub labels: Vec<LabelCount>,
}

impl CorpusStats {
    pub fn count(&self, label: &str) -> Option<usize> {
        self.labels.iter().find(|c| c.label == label).map(|c| c.count)
    }

    pub fn to_table(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(0)
            .max("Mentions".len());
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>7}", "Mentions", self.total);
        for c in &self.labels {
            let _ = writeln!(s, "{:<width$}  {:>7}  {:>5.1}%", c.label, c.count, c.percent);
        }
        s
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut counts = vec![0usize; corpus.scheme.len()];
    for doc in &corpus.documents {
        for (_, m) in doc.mentions() {
            if let Some(i) = corpus.scheme.index_of(&m.label) {
                counts[i] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let labels = corpus
        .scheme
        .labels()
        .iter()
        .zip(counts)
        .map(|(label, count)| LabelCount {
            label: label.clone(),
            count,
            percent: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        })
        .collect();
    CorpusStats {
        total,
        documents: corpus.documents.len(),
        labels,
    }
}

// ---------------------------------------------------------------------------
// Folds

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Document-level k-fold split: doc ids are shuffled with `seed` and dealt
/// round-robin into `k` test sets. Training ids keep corpus order.
pub fn split_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = corpus.documents.len();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!(
            "{k} folds requested but corpus has only {n} documents"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut fold_of = vec![0usize; n];
    for (slot, &doc) in order.iter().enumerate() {
        fold_of[doc] = slot % k;
    }
    let folds = (0..k)
        .map(|f| {
            let test = order
                .iter()
                .enumerate()
                .filter(|(slot, _)| slot % k == f)
                .map(|(_, &d)| corpus.documents[d].doc_id.clone())
                .collect();
            let train = (0..n)
                .filter(|&d| fold_of[d] != f)
                .map(|d| corpus.documents[d].doc_id.clone())
                .collect();
            Fold { train, test }
        })
        .collect();
    Ok(folds)
}

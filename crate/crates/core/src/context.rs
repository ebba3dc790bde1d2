//! Previous-context overlap features and pseudo-sentence assembly.
//!
//! A pseudo sentence is laid out as
//!
//! ```text
//! [CLS] pre_overlap1=v pre_overlap2=v <previous sentences> <local sentence> [SEP] <mention> [SEP]
//! ```
//!
//! with segment 0 running through the first `[SEP]` and segment 1 after it.
//! Any of the overlap pair, the local sentence and the mention may be
//! switched off for ablations; the delimiters are always present.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Mention, Sentence};
use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Overlap {
    Yes,
    No,
    #[serde(rename = "NA")]
    NotApplicable,
}

impl Overlap {
    pub fn as_str(self) -> &'static str {
        match self {
            Overlap::Yes => "yes",
            Overlap::No => "no",
            Overlap::NotApplicable => "NA",
        }
    }

    fn from_bool(hit: bool) -> Self {
        if hit {
            Overlap::Yes
        } else {
            Overlap::No
        }
    }
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// String-match and head-match against mentions in earlier sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OverlapFeature {
    pub string_overlap: Overlap,
    pub head_overlap: Overlap,
}

impl OverlapFeature {
    pub const NOT_APPLICABLE: Self = Self {
        string_overlap: Overlap::NotApplicable,
        head_overlap: Overlap::NotApplicable,
    };

    /// The two atomic tokens carried by the pseudo sentence.
    pub fn tokens(&self) -> [String; 2] {
        [
            format!("pre_overlap1={}", self.string_overlap),
            format!("pre_overlap2={}", self.head_overlap),
        ]
    }
}

/// Every value the overlap tokens can take, in a fixed order.
pub fn all_overlap_tokens() -> Vec<String> {
    let values = [Overlap::Yes, Overlap::No, Overlap::NotApplicable];
    (1..=2)
        .flat_map(|slot| values.iter().map(move |v| format!("pre_overlap{slot}={v}")))
        .collect()
}

pub fn is_overlap_token(token: &str) -> bool {
    matches!(
        token.strip_prefix("pre_overlap1=").or_else(|| token.strip_prefix("pre_overlap2=")),
        Some("yes" | "no" | "NA")
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    pub include_mention: bool,
    pub include_local_context: bool,
    pub include_overlap: bool,
    pub extra_prev_sentences: usize,
    pub max_tokens: usize,
    pub sliding_window_stride: usize,
    pub all_previous_context: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            include_mention: true,
            include_local_context: true,
            include_overlap: true,
            extra_prev_sentences: 0,
            max_tokens: 128,
            sliding_window_stride: 100,
            all_previous_context: false,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.include_mention || self.include_local_context || self.include_overlap) {
            return Err(Error::Invariant(
                "pseudo sentence needs at least one of mention, local context, overlap".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if self.sliding_window_stride == 0 {
            return Err(Error::Config("sliding window stride must be positive".into()));
        }
        Ok(())
    }

    /// The four ablations reported alongside the full model.
    pub fn ablations(&self) -> Vec<(&'static str, ContextConfig)> {
        let with = |f: fn(&mut ContextConfig)| {
            let mut c = self.clone();
            f(&mut c);
            c
        };
        vec![
            ("wo-mention", with(|c| c.include_mention = false)),
            ("wo-local", with(|c| c.include_local_context = false)),
            ("wo-overlap", with(|c| c.include_overlap = false)),
            (
                "wo-context",
                with(|c| {
                    c.include_local_context = false;
                    c.include_overlap = false;
                }),
            ),
        ]
    }
}

/// Which part of the pseudo sentence a token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenRole {
    Cls,
    Overlap,
    Previous,
    Local,
    Sep,
    Mention,
}

impl TokenRole {
    /// Previous and local sentences form the truncatable context region.
    pub fn is_context(self) -> bool {
        matches!(self, TokenRole::Previous | TokenRole::Local)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoSentence {
    pub tokens: Vec<String>,
    pub segment_ids: Vec<u8>,
    pub roles: Vec<TokenRole>,
    pub mention_id: String,
    pub gold_label: String,
}

impl PseudoSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens_with_role(&self, role: TokenRole) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .zip(&self.roles)
            .filter(move |(_, r)| **r == role)
            .map(|(t, _)| t.as_str())
    }

    /// Checks the structural invariants against a token budget.
    pub fn check(&self, max_tokens: usize) -> Result<()> {
        let n = self.tokens.len();
        if self.segment_ids.len() != n || self.roles.len() != n {
            return Err(Error::Invariant("token, segment and role lengths differ".into()));
        }
        if n > max_tokens {
            return Err(Error::Invariant(format!("{n} tokens exceed budget {max_tokens}")));
        }
        if self.tokens.first().map(String::as_str) != Some(CLS)
            || self.tokens.iter().filter(|t| *t == CLS).count() != 1
        {
            return Err(Error::Invariant("[CLS] must appear exactly once, first".into()));
        }
        if self.segment_ids.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invariant("segment ids decrease".into()));
        }
        let seps: Vec<usize> = (0..n).filter(|&i| self.tokens[i] == SEP).collect();
        if seps.len() != 2 || seps[1] != n - 1 {
            return Err(Error::Invariant("expected exactly two [SEP], the last closing".into()));
        }
        for i in 0..n {
            let expect = u8::from(i > seps[0]);
            if self.segment_ids[i] != expect {
                return Err(Error::Invariant(format!("token {i} has segment {}", self.segment_ids[i])));
            }
        }
        // Part order: Cls, Overlap*, Previous*, Local*, Sep, Mention*, Sep.
        let rank = |r: TokenRole, i: usize| match r {
            TokenRole::Cls => 0,
            TokenRole::Overlap => 1,
            TokenRole::Previous => 2,
            TokenRole::Local => 3,
            TokenRole::Sep if i == seps[0] => 4,
            TokenRole::Mention => 5,
            TokenRole::Sep => 6,
        };
        let ranks: Vec<u8> = self.roles.iter().enumerate().map(|(i, &r)| rank(r, i)).collect();
        if ranks.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invariant("pseudo sentence parts out of order".into()));
        }
        Ok(())
    }
}

fn locate<'a>(mention: &Mention, doc: &'a Document) -> Result<&'a Sentence> {
    doc.sentences
        .iter()
        .find(|s| s.mentions.iter().any(|m| m == mention))
        .ok_or_else(|| {
            Error::Invariant(format!(
                "mention {:?} is not in document {:?}",
                mention.mention_id, doc.doc_id
            ))
        })
}

fn same_tokens(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_lowercase() == y.to_lowercase())
}

pub fn compute_overlap(mention: &Mention, doc: &Document) -> Result<OverlapFeature> {
    let sentence = locate(mention, doc)?;
    if mention.is_pronoun {
        return Ok(OverlapFeature::NOT_APPLICABLE);
    }
    let span = mention.span(sentence);
    let head = sentence.tokens[mention.head].to_lowercase();
    let mut string_hit = false;
    let mut head_hit = false;
    for earlier in &doc.sentences[..sentence.index] {
        for other in &earlier.mentions {
            string_hit |= same_tokens(other.span(earlier), span);
            head_hit |= earlier.tokens[other.head].to_lowercase() == head;
            if string_hit && head_hit {
                break;
            }
        }
    }
    Ok(OverlapFeature {
        string_overlap: Overlap::from_bool(string_hit),
        head_overlap: Overlap::from_bool(head_hit),
    })
}

/// Collects the parts shared by plain and windowed pseudo sentences.
struct Parts {
    overlap: Option<[String; 2]>,
    local: Vec<String>,
    mention: Vec<String>,
}

impl Parts {
    fn new(mention: &Mention, doc: &Document, config: &ContextConfig) -> Result<(Self, usize)> {
        config.validate()?;
        let sentence = locate(mention, doc)?;
        let overlap = if config.include_overlap {
            Some(compute_overlap(mention, doc)?.tokens())
        } else {
            None
        };
        let local = if config.include_local_context {
            sentence.tokens.clone()
        } else {
            Vec::new()
        };
        let mention_tokens = if config.include_mention {
            mention.span(sentence).to_vec()
        } else {
            Vec::new()
        };
        Ok((
            Self {
                overlap,
                local,
                mention: mention_tokens,
            },
            sentence.index,
        ))
    }

    fn assemble(&self, previous: &[String], mention: &Mention) -> PseudoSentence {
        let mut tokens = Vec::new();
        let mut roles = Vec::new();
        let mut push = |t: &str, r: TokenRole| {
            tokens.push(t.to_string());
            roles.push(r);
        };
        push(CLS, TokenRole::Cls);
        if let Some(ov) = &self.overlap {
            for t in ov {
                push(t, TokenRole::Overlap);
            }
        }
        for t in previous {
            push(t, TokenRole::Previous);
        }
        for t in &self.local {
            push(t, TokenRole::Local);
        }
        push(SEP, TokenRole::Sep);
        for t in &self.mention {
            push(t, TokenRole::Mention);
        }
        push(SEP, TokenRole::Sep);
        let first_sep = roles.iter().position(|r| *r == TokenRole::Sep).unwrap();
        let segment_ids = (0..tokens.len()).map(|i| u8::from(i > first_sep)).collect();
        PseudoSentence {
            tokens,
            segment_ids,
            roles,
            mention_id: mention.mention_id.clone(),
            gold_label: mention.label.clone(),
        }
    }

    fn fixed_len(&self) -> usize {
        3 + self.overlap.as_ref().map_or(0, |_| 2) + self.mention.len()
    }
}

fn previous_tokens(doc: &Document, sentence_index: usize, from: usize) -> Vec<String> {
    doc.sentences[from..sentence_index]
        .iter()
        .flat_map(|s| s.tokens.iter().cloned())
        .collect()
}

/// Builds the model input for one mention. In the all-previous-context
/// variant this is the window closest to the mention; use
/// [`build_instances`] to get every window.
pub fn build_pseudo_sentence(
    mention: &Mention,
    doc: &Document,
    config: &ContextConfig,
) -> Result<PseudoSentence> {
    if config.all_previous_context {
        let mut windows = window_previous_context(doc, mention, config)?;
        return Ok(windows.pop().expect("at least one window"));
    }
    let (parts, index) = Parts::new(mention, doc, config)?;
    let from = index.saturating_sub(config.extra_prev_sentences);
    let previous = previous_tokens(doc, index, from);
    truncate_pseudo(parts.assemble(&previous, mention), config.max_tokens)
}

/// All pseudo sentences for a mention: one, or one per window.
pub fn build_instances(
    mention: &Mention,
    doc: &Document,
    config: &ContextConfig,
) -> Result<Vec<PseudoSentence>> {
    if config.all_previous_context {
        window_previous_context(doc, mention, config)
    } else {
        build_pseudo_sentence(mention, doc, config).map(|ps| vec![ps])
    }
}

/// Cuts the context region from its end until the sentence fits.
pub fn truncate_pseudo(ps: PseudoSentence, max_tokens: usize) -> Result<PseudoSentence> {
    let n = ps.tokens.len();
    if n <= max_tokens {
        return Ok(ps);
    }
    let excess = n - max_tokens;
    let context: Vec<usize> = (0..n).filter(|&i| ps.roles[i].is_context()).collect();
    if context.len() < excess {
        return Err(Error::Budget(format!(
            "mention {:?}: {} non-context tokens exceed the budget of {max_tokens}",
            ps.mention_id,
            n - context.len()
        )));
    }
    let mut keep = vec![true; n];
    for &i in &context[context.len() - excess..] {
        keep[i] = false;
    }
    fn retain<T>(v: Vec<T>, keep: &[bool]) -> Vec<T> {
        v.into_iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| x).collect()
    }
    let segment_ids = retain(ps.segment_ids, &keep);
    let roles = retain(ps.roles, &keep);
    let tokens = retain(ps.tokens, &keep);
    Ok(PseudoSentence {
        tokens,
        segment_ids,
        roles,
        ..ps
    })
}

/// Token ranges `[start, end)` of the windows over `total` previous tokens.
pub fn window_spans(total: usize, capacity: usize, stride: usize) -> Vec<(usize, usize)> {
    if total == 0 || capacity == 0 {
        return vec![(0, 0)];
    }
    let step = stride.min(capacity);
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + capacity).min(total);
        spans.push((start, end));
        if end == total {
            break;
        }
        start += step;
    }
    spans
}

/// Overlapping windows over all previous sentences, each framed with the
/// local sentence and the mention. Window logits are averaged at prediction.
pub fn window_previous_context(
    doc: &Document,
    mention: &Mention,
    config: &ContextConfig,
) -> Result<Vec<PseudoSentence>> {
    if config.sliding_window_stride == 0 {
        return Err(Error::Config("sliding window stride must be positive".into()));
    }
    let (parts, index) = Parts::new(mention, doc, config)?;
    let previous = previous_tokens(doc, index, 0);
    let fixed = parts.fixed_len() + parts.local.len();
    let capacity = config.max_tokens.saturating_sub(fixed);
    window_spans(previous.len(), capacity, config.sliding_window_stride)
        .into_iter()
        .map(|(s, e)| truncate_pseudo(parts.assemble(&previous[s..e], mention), config.max_tokens))
        .collect()
}

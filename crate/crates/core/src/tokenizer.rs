//! Subword vocabulary learned by greedy pair merges, and fixed-length encoding.
//!
//! Word-internal pieces carry a `##` prefix. The four specials and the six
//! overlap tokens hold the first ids and are never split or lowercased.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::context::{all_overlap_tokens, PseudoSentence, TokenRole};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CONTINUATION: &str = "##";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// Specials then overlap tokens, in id order.
pub fn reserved_tokens() -> Vec<String> {
    let mut v: Vec<String> = [PAD, UNK, crate::context::CLS, crate::context::SEP]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(all_overlap_tokens());
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    reserved: usize,
}

impl Vocab {
    /// Builds a vocabulary from an id-ordered token list whose prefix is
    /// [`reserved_tokens`].
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let reserved = reserved_tokens();
        if tokens.len() < reserved.len() || tokens[..reserved.len()] != reserved[..] {
            return Err(Error::Invariant(format!(
                "vocabulary must start with the reserved tokens {reserved:?}"
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Invariant(format!("token {i} is empty or has whitespace")));
            }
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invariant(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            reserved: reserved.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(&self, token: &str) -> bool {
        self.id(token).is_some_and(|id| (id as usize) < self.reserved)
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn normalize(word: &str) -> String {
    word.to_lowercase()
}

/// Splits a word into its initial character and `##`-prefixed continuations.
fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION}{c}")
            }
        })
        .collect()
}

fn merged(left: &str, right: &str) -> String {
    format!("{left}{}", right.strip_prefix(CONTINUATION).unwrap_or(right))
}

/// Learns a vocabulary of at most `target_size` entries from the words of
/// `corpus`. Pair ties go to the pair seen first in corpus order.
pub fn build_vocab(corpus: &Corpus, target_size: usize) -> Result<Vocab> {
    let words = corpus
        .documents
        .iter()
        .flat_map(|d| d.sentences.iter())
        .flat_map(|s| s.tokens.iter().map(String::as_str));
    build_vocab_from_words(words, target_size)
}

pub fn build_vocab_from_words<'a>(
    words: impl IntoIterator<Item = &'a str>,
    target_size: usize,
) -> Result<Vocab> {
    let mut tokens = reserved_tokens();
    let reserved: std::collections::HashSet<String> = tokens.iter().cloned().collect();

    // Word types in first-seen order with their frequencies.
    let mut type_index: HashMap<String, usize> = HashMap::new();
    let mut types: Vec<(Vec<String>, usize)> = Vec::new();
    for w in words {
        if reserved.contains(w) || w.is_empty() {
            continue;
        }
        let w = normalize(w);
        match type_index.get(&w) {
            Some(&i) => types[i].1 += 1,
            None => {
                type_index.insert(w.clone(), types.len());
                types.push((initial_symbols(&w), 1));
            }
        }
    }

    let mut ids: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    let mut alphabet = 0;
    for (symbols, _) in &types {
        for s in symbols {
            if !ids.contains_key(s) {
                ids.insert(s.clone(), tokens.len() as u32);
                tokens.push(s.clone());
                alphabet += 1;
            }
        }
    }
    if target_size <= reserved.len() + alphabet {
        return Err(Error::Config(format!(
            "vocabulary target {target_size} must exceed {} reserved tokens plus {alphabet} base symbols",
            reserved.len()
        )));
    }

    while tokens.len() < target_size {
        let Some((left, right)) = best_pair(&types) else {
            break;
        };
        let joined = merged(&left, &right);
        for (symbols, _) in types.iter_mut() {
            apply_merge(symbols, &left, &right, &joined);
        }
        if !ids.contains_key(&joined) {
            ids.insert(joined.clone(), tokens.len() as u32);
            tokens.push(joined);
        }
    }
    Vocab::from_tokens(tokens)
}

fn best_pair(types: &[(Vec<String>, usize)]) -> Option<(String, String)> {
    let mut counts: HashMap<(&str, &str), (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for (symbols, freq) in types {
        for pair in symbols.windows(2) {
            let entry = counts
                .entry((pair[0].as_str(), pair[1].as_str()))
                .or_insert((0, order));
            entry.0 += freq;
            order += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|((l, r), _)| (l.to_string(), r.to_string()))
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str, joined: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            symbols[i] = joined.to_string();
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

/// Greedy longest-match-first segmentation. A word with an unmatchable
/// character becomes a single `[UNK]`.
pub fn tokenize(word: &str, vocab: &Vocab) -> Vec<String> {
    if vocab.is_reserved(word) {
        return vec![word.to_string()];
    }
    let word = normalize(word);
    let chars: Vec<char> = word.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let body: String = chars[start..end].iter().collect();
            let candidate = if start == 0 {
                body
            } else {
                format!("{CONTINUATION}{body}")
            };
            if vocab.id(&candidate).is_some() {
                found = Some((candidate, end));
                break;
            }
        }
        match found {
            Some((piece, end)) => {
                pieces.push(piece);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    /// Number of real (unpadded) positions.
    pub length: usize,
}

impl EncodedInput {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Re-pads to a different fixed length, keeping the real tokens.
    pub fn repad(&self, max_tokens: usize) -> Result<Self> {
        if self.length > max_tokens {
            return Err(Error::Budget(format!(
                "{} real tokens do not fit in {max_tokens}",
                self.length
            )));
        }
        let pad = |v: &[u32], fill| {
            let mut v = v[..self.length].to_vec();
            v.resize(max_tokens, fill);
            v
        };
        let pad8 = |v: &[u8]| {
            let mut v = v[..self.length].to_vec();
            v.resize(max_tokens, 0);
            v
        };
        Ok(Self {
            ids: pad(&self.ids, PAD_ID),
            segment_ids: pad8(&self.segment_ids),
            attention_mask: pad8(&self.attention_mask),
            length: self.length,
        })
    }
}

/// Subword-expands, re-truncates the context region if expansion overflows,
/// and right-pads to `max_tokens`.
pub fn encode(ps: &PseudoSentence, vocab: &Vocab, max_tokens: usize) -> Result<EncodedInput> {
    let mut pieces: Vec<(u32, u8, TokenRole)> = Vec::with_capacity(ps.tokens.len() + 8);
    for ((word, &seg), &role) in ps.tokens.iter().zip(&ps.segment_ids).zip(&ps.roles) {
        for piece in tokenize(word, vocab) {
            let id = vocab.id(&piece).unwrap_or(UNK_ID);
            pieces.push((id, seg, role));
        }
    }
    if pieces.len() > max_tokens {
        let excess = pieces.len() - max_tokens;
        let context: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].2.is_context()).collect();
        if context.len() < excess {
            return Err(Error::Budget(format!(
                "mention {:?}: {} subwords outside the context exceed {max_tokens}",
                ps.mention_id,
                pieces.len() - context.len()
            )));
        }
        let mut keep = vec![true; pieces.len()];
        for &i in &context[context.len() - excess..] {
            keep[i] = false;
        }
        pieces = pieces.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
    }
    let length = pieces.len();
    let mut ids: Vec<u32> = pieces.iter().map(|p| p.0).collect();
    let mut segment_ids: Vec<u8> = pieces.iter().map(|p| p.1).collect();
    let mut attention_mask = vec![1u8; length];
    ids.resize(max_tokens, PAD_ID);
    segment_ids.resize(max_tokens, 0);
    attention_mask.resize(max_tokens, 0);
    Ok(EncodedInput {
        ids,
        segment_ids,
        attention_mask,
        length,
    })
}

/// Rejoins subword pieces into words, skipping padding.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Vec<String> {
    decode_with_positions(ids, vocab)
        .into_iter()
        .map(|(w, _)| w)
        .collect()
}

/// Like [`decode`], also returning the positions each word came from.
pub fn decode_with_positions(ids: &[u32], vocab: &Vocab) -> Vec<(String, Vec<usize>)> {
    let mut words: Vec<(String, Vec<usize>)> = Vec::new();
    for (pos, &id) in ids.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let piece = vocab.token(id).unwrap_or(UNK);
        match (piece.strip_prefix(CONTINUATION), words.last_mut()) {
            (Some(rest), Some((word, positions))) if !rest.is_empty() => {
                word.push_str(rest);
                positions.push(pos);
            }
            _ => words.push((piece.to_string(), vec![pos])),
        }
    }
    words
}

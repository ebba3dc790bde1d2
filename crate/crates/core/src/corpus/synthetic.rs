//! Rule-labelled synthetic discourse generator.
//!
//! Each document draws its label sequence from the mixing weights with
//! largest-remainder quotas, then realizes every label with a surface form
//! that satisfies the labelling rule for that class:
//!
//! | label              | realization                                                   |
//! |--------------------|---------------------------------------------------------------|
//! | `old`              | pronoun, or exact repeat of a mention from an earlier sentence |
//! | `m/worldKnowledge` | gazetteer name never used before in the document              |
//! | `m/syntactic`      | `X 's Y` / `the Y of X` with X an earlier name mention, or a possessive pronoun + Y |
//! | `m/aggregate`      | `X and Y` over gazetteer names                                 |
//! | `m/function`       | number phrase right after a rise/fall verb                    |
//! | `m/comparative`    | `another/other/more/further + N`                               |
//! | `m/bridging`       | definite relational noun (or bare `friends`) after some earlier mention |
//! | `new`              | `a/an + N` first mention                                      |
//!
//! No non-`old` mention repeats the string of an earlier-sentence mention, so
//! `old` for non-pronouns coincides with a string-overlap hit.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{guess_head, Corpus, Document, LabelScheme, Mention, Sentence, ISNOTES_LABELS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub docs: usize,
    pub sentences_per_doc: usize,
    pub min_mentions: usize,
    pub max_mentions: usize,
    /// Mixing weights in `ISNOTES_LABELS` order.
    pub weights: [f64; 8],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            docs: 50,
            sentences_per_doc: 12,
            min_mentions: 1,
            max_mentions: 4,
            weights: [0.28, 0.12, 0.14, 0.07, 0.07, 0.08, 0.10, 0.14],
        }
    }
}

impl SyntheticConfig {
    pub fn small(docs: usize, sentences_per_doc: usize) -> Self {
        Self {
            docs,
            sentences_per_doc,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.docs == 0 || self.sentences_per_doc == 0 {
            return Err(Error::Config(
                "synthetic corpus needs at least one document and one sentence".into(),
            ));
        }
        if self.min_mentions == 0
            || self.max_mentions < self.min_mentions
            || self.max_mentions > MAX_MENTIONS_PER_SENTENCE
        {
            return Err(Error::Config(format!(
                "mentions per sentence range [{}, {}] must lie within [1, {MAX_MENTIONS_PER_SENTENCE}]",
                self.min_mentions, self.max_mentions
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("mixing weights must be non-negative and not all zero".into()));
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> [f64; 8] {
        let total: f64 = self.weights.iter().sum();
        self.weights.map(|w| w / total)
    }
}

const OLD: usize = 0;
const WORLD: usize = 1;
const SYNTACTIC: usize = 2;
const AGGREGATE: usize = 3;
const FUNCTION: usize = 4;
const COMPARATIVE: usize = 5;
const BRIDGING: usize = 6;
const NEW: usize = 7;

const NAMES: &[&str] = &[
    "Poland", "Canada", "France", "Japan", "Brazil", "Kenya", "Norway", "Chile", "Egypt", "India",
    "Ohio", "Texas", "Boston", "Chicago", "Delmed", "Sony", "Boeing", "Exxon", "Reuters", "Nissan",
    "Francis", "Mandela", "Merkel", "Toyota", "Peru", "Vietnam", "Denver", "Atlanta", "Siemens",
    "Nestle", "Moscow", "Berlin", "Madrid", "Lisbon", "Oslo", "Dublin", "Quebec", "Alaska",
    "Harvard", "Intel",
];

const NOUNS: &[&str] = &[
    "farmer", "reader", "engineer", "company", "bank", "law", "report", "contract", "magazine",
    "factory", "plan", "deal", "truck", "investor", "union", "strike", "loan", "storm", "office",
    "airline", "editor", "agency", "museum", "lawyer", "doctor", "teacher", "bridge", "hotel",
    "island", "orchestra", "umbrella", "artist", "analyst", "election", "network", "studio",
    "vendor", "garden", "ticket", "ally",
];

const RELATIONAL: &[&str] = &[
    "price", "door", "reason", "demand", "production", "owner", "roof", "staff", "chairman",
    "rest",
];

const POSSESSED: &[&str] = &[
    "father", "workers", "capital", "economy", "leaders", "shares", "president", "mother",
    "budget", "army", "coast", "exports",
];

const POSSESSIVE_PRONOUNS: &[&str] = &["their", "its", "her", "his"];
const SUBJECT_PRONOUNS: &[&str] = &["She", "He", "It", "They"];
const OBJECT_PRONOUNS: &[&str] = &["her", "him", "it", "them"];
const DEMONSTRATIVES: &[&str] = &["this", "that", "these", "those"];

pub const MAX_MENTIONS_PER_SENTENCE: usize = 8;

const COMPARATIVE_SINGULAR: &[&str] = &["another"];
const COMPARATIVE_PLURAL: &[&str] = &["other", "more", "further"];

const VERBS: &[&str] = &[
    "visited", "met", "praised", "criticized", "bought", "reported", "watched", "signed", "backed",
    "joined", "sued", "hired", "thanked", "ignored",
];
const INTRANSITIVE: &[&[&str]] = &[
    &["made", "money"],
    &["pitched", "in"],
    &["resigned"],
    &["agreed"],
    &["complained"],
    &["left", "early"],
    &["stayed", "home"],
];
const RISE_FALL: &[&str] = &["fell", "rose", "dropped", "climbed", "declined", "gained"];
const AMOUNTS: &[&str] = &["cents", "%", "points", "million", "dollars", "percent"];
const FILLER_SUBJECTS: &[&str] = &["Shares", "Sales", "Prices", "Profits"];

/// Document-level state shared across slot realizations.
#[derive(Default)]
struct DocState {
    /// Lowercased strings of mentions in strictly earlier sentences.
    earlier: Vec<Vec<String>>,
    earlier_set: HashSet<String>,
    /// Names that stood alone as mentions in earlier sentences.
    earlier_names: Vec<String>,
    /// Every lowercased token used so far in the document.
    used_tokens: HashSet<String>,
    /// Number of mentions emitted so far.
    mentions_so_far: usize,
}

/// Mention realization before placement in a sentence.
struct Surface {
    tokens: Vec<String>,
    is_pronoun: bool,
    /// Whether this is a bare gazetteer name (for later syntactic mentions).
    name: bool,
}

fn key(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| s.to_string()).collect()
}

fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn plural(noun: &str) -> String {
    if let Some(stem) = noun.strip_suffix('y') {
        if !stem.ends_with(['a', 'e', 'o', 'u']) {
            return format!("{stem}ies");
        }
    }
    format!("{noun}s")
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    config: &'a SyntheticConfig,
}

impl Generator<'_> {
    fn pick<'b>(&mut self, pool: &'b [&'b str]) -> &'b str {
        pool.choose(&mut self.rng).expect("non-empty pool")
    }

    /// Label sequence for a document. Systematic sampling over the cumulative
    /// weights: each label gets the floor or ceiling of `weight * n` slots and
    /// its expected count is exactly `weight * n`.
    fn label_bag(&mut self, n: usize) -> Vec<usize> {
        let weights = self.config.normalized_weights();
        let offset: f64 = self.rng.gen();
        let mut bag = Vec::with_capacity(n);
        let mut cumulative = 0.0;
        let mut taken = 0usize;
        for (label, w) in weights.iter().enumerate() {
            cumulative += w * n as f64;
            let upto = ((cumulative + offset).floor() as usize).min(n);
            let upto = if label == weights.len() - 1 { n } else { upto };
            bag.extend(std::iter::repeat_n(label, upto.saturating_sub(taken)));
            taken = taken.max(upto);
        }
        bag.shuffle(&mut self.rng);
        bag
    }

    fn realize(
        &mut self,
        label: usize,
        state: &DocState,
        sentence_keys: &HashSet<String>,
        subject: bool,
    ) -> Option<Surface> {
        for _ in 0..40 {
            let surface = self.try_realize(label, state, subject)?;
            if surface.tokens.is_empty() {
                continue;
            }
            let k = key(&surface.tokens);
            if sentence_keys.contains(&k) {
                continue;
            }
            if label != OLD && state.earlier_set.contains(&k) {
                continue;
            }
            if label == WORLD && state.used_tokens.contains(&k) {
                continue;
            }
            if label == AGGREGATE
                && surface
                    .tokens
                    .iter()
                    .any(|t| t != "and" && state.used_tokens.contains(&t.to_lowercase()))
            {
                continue;
            }
            return Some(surface);
        }
        None
    }

    fn try_realize(&mut self, label: usize, state: &DocState, subject: bool) -> Option<Surface> {
        let plain = |tokens: Vec<String>| Surface {
            tokens,
            is_pronoun: false,
            name: false,
        };
        let surface = match label {
            OLD => {
                let repeatable: Vec<&Vec<String>> = state.earlier.iter().collect();
                if !repeatable.is_empty() && self.rng.gen_bool(0.6) {
                    let tokens = repeatable.choose(&mut self.rng).unwrap().to_vec();
                    let tokens = restore_case(tokens);
                    let name = tokens.len() == 1 && NAMES.contains(&tokens[0].as_str());
                    Surface {
                        tokens,
                        is_pronoun: false,
                        name,
                    }
                } else {
                    let pool = if subject { SUBJECT_PRONOUNS } else { OBJECT_PRONOUNS };
                    Surface {
                        tokens: words(&[self.pick(pool)]),
                        is_pronoun: true,
                        name: false,
                    }
                }
            }
            WORLD => Surface {
                tokens: words(&[self.pick(NAMES)]),
                is_pronoun: false,
                name: true,
            },
            SYNTACTIC => {
                let y = self.pick(POSSESSED);
                if !state.earlier_names.is_empty() && self.rng.gen_bool(0.7) {
                    let x = state.earlier_names.choose(&mut self.rng).unwrap().clone();
                    if self.rng.gen_bool(0.5) {
                        plain(vec![x, "'s".into(), y.into()])
                    } else {
                        plain(vec!["the".into(), y.into(), "of".into(), x])
                    }
                } else {
                    plain(words(&[self.pick(POSSESSIVE_PRONOUNS), y]))
                }
            }
            AGGREGATE => {
                let a = self.pick(NAMES);
                let b = self.pick(NAMES);
                if a == b {
                    return Some(plain(vec![]));
                }
                plain(words(&[a, "and", b]))
            }
            FUNCTION => {
                let n = self.rng.gen_range(2..=250u32).to_string();
                plain(vec![n, self.pick(AMOUNTS).into()])
            }
            COMPARATIVE => {
                let noun = self.pick(NOUNS);
                if self.rng.gen_bool(0.4) {
                    plain(words(&[self.pick(COMPARATIVE_SINGULAR), noun]))
                } else {
                    plain(vec![self.pick(COMPARATIVE_PLURAL).into(), plural(noun)])
                }
            }
            BRIDGING => {
                if state.mentions_so_far == 0 {
                    return None;
                }
                if subject && self.rng.gen_bool(0.15) {
                    plain(words(&["Friends"]))
                } else {
                    plain(words(&["the", self.pick(RELATIONAL)]))
                }
            }
            NEW => {
                let noun = self.pick(NOUNS);
                plain(words(&[article(noun), noun]))
            }
            _ => unreachable!("label index out of range"),
        };
        Some(surface)
    }
}

/// Repeats keep the original casing of gazetteer names and "Friends".
fn restore_case(tokens: Vec<String>) -> Vec<String> {
    tokens
        .into_iter()
        .map(|t| {
            NAMES
                .iter()
                .chain(std::iter::once(&"Friends"))
                .find(|n| n.to_lowercase() == t)
                .map(|n| n.to_string())
                .unwrap_or(t)
        })
        .collect()
}

pub fn gen_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut gen = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        config,
    };
    let documents = (0..config.docs)
        .map(|d| generate_document(&mut gen, d))
        .collect();
    let scheme = LabelScheme::isnotes();
    Corpus::new(scheme, documents)
}

fn generate_document(gen: &mut Generator<'_>, doc_index: usize) -> Document {
    let config = gen.config;
    let per_sentence: Vec<usize> = (0..config.sentences_per_doc)
        .map(|_| gen.rng.gen_range(config.min_mentions..=config.max_mentions))
        .collect();
    let mut bag = gen.label_bag(per_sentence.iter().sum());
    // The very first mention has nothing to bridge from.
    if let Some(pos) = bag.iter().position(|&l| l != BRIDGING) {
        bag.swap(0, pos);
    }

    let doc_id = format!("syn{doc_index:04}");
    let mut state = DocState::default();
    let mut sentences = Vec::with_capacity(config.sentences_per_doc);
    let mut next = 0usize;
    let mut mention_counter = 0usize;

    for (index, &n) in per_sentence.iter().enumerate() {
        let labels: Vec<usize> = bag[next..next + n].to_vec();
        next += n;
        let (tokens, placed) = build_sentence(gen, &labels, &mut state);

        let mut mentions = Vec::with_capacity(placed.len());
        for (start, surface, label) in &placed {
            let end = start + surface.tokens.len();
            mentions.push(Mention {
                mention_id: format!("{doc_id}-m{mention_counter:03}"),
                start: *start,
                end,
                head: start + guess_head(&tokens[*start..end]),
                is_pronoun: surface.is_pronoun,
                label: ISNOTES_LABELS[*label].to_string(),
            });
            mention_counter += 1;
        }
        for (_, surface, _) in &placed {
            if !surface.is_pronoun {
                let k = key(&surface.tokens);
                if state.earlier_set.insert(k) {
                    state.earlier.push(surface.tokens.iter().map(|t| t.to_lowercase()).collect());
                }
                if surface.name && !state.earlier_names.contains(&surface.tokens[0]) {
                    state.earlier_names.push(surface.tokens[0].clone());
                }
            }
        }
        state
            .used_tokens
            .extend(tokens.iter().map(|t| t.to_lowercase()));
        sentences.push(Sentence {
            index,
            tokens,
            mentions,
        });
    }
    Document { doc_id, sentences }
}

type Placed = (usize, Surface, usize);

/// Lays out one sentence: `SUBJ VP (and VERB OBJ)* .`
fn build_sentence(
    gen: &mut Generator<'_>,
    labels: &[usize],
    state: &mut DocState,
) -> (Vec<String>, Vec<Placed>) {
    let mut labels = labels.to_vec();
    // Subject is the first label that may sit in subject position.
    let subject_ok = |l: usize, st: &DocState| l != FUNCTION && (l != BRIDGING || st.mentions_so_far > 0);
    let subject_pos = labels.iter().position(|&l| subject_ok(l, state));
    let subject_label = subject_pos.map(|p| labels.remove(p));

    let mut tokens: Vec<String> = Vec::new();
    let mut placed: Vec<Placed> = Vec::new();
    let mut keys: HashSet<String> = HashSet::new();

    let emit = |tokens: &mut Vec<String>,
                placed: &mut Vec<Placed>,
                keys: &mut HashSet<String>,
                state: &mut DocState,
                surface: Surface,
                label: usize| {
        keys.insert(key(&surface.tokens));
        let start = tokens.len();
        tokens.extend(surface.tokens.iter().cloned());
        for t in &surface.tokens {
            state.used_tokens.insert(t.to_lowercase());
        }
        state.mentions_so_far += 1;
        placed.push((start, surface, label));
    };

    match subject_label {
        Some(label) => {
            let surface = realize_or_fallback(gen, label, state, &keys, true);
            let (surface, label) = surface;
            emit(&mut tokens, &mut placed, &mut keys, state, surface, label);
        }
        None => tokens.push(gen.pick(FILLER_SUBJECTS).to_string()),
    }

    if labels.is_empty() {
        let is_friends = placed.first().is_some_and(|(_, s, _)| s.tokens == ["Friends"]);
        if is_friends {
            tokens.extend(words(&["pitched", "in"]));
        } else {
            let vp = *INTRANSITIVE.choose(&mut gen.rng).unwrap();
            tokens.extend(words(vp));
        }
    }

    for (i, &label) in labels.iter().enumerate() {
        if i > 0 {
            if gen.rng.gen_bool(0.3) {
                tokens.push(",".into());
            }
            tokens.push("and".into());
        }
        let verb = if label == FUNCTION {
            gen.pick(RISE_FALL)
        } else {
            gen.pick(VERBS)
        };
        tokens.push(verb.into());
        let (surface, label) = realize_or_fallback(gen, label, state, &keys, false);
        emit(&mut tokens, &mut placed, &mut keys, state, surface, label);
    }
    tokens.push(".".into());
    (tokens, placed)
}

/// Realizes `label`, falling back to a pronoun (always realizable as `old`).
fn realize_or_fallback(
    gen: &mut Generator<'_>,
    label: usize,
    state: &DocState,
    keys: &HashSet<String>,
    subject: bool,
) -> (Surface, usize) {
    if let Some(s) = gen.realize(label, state, keys, subject) {
        return (s, label);
    }
    let pool = if subject { SUBJECT_PRONOUNS } else { OBJECT_PRONOUNS };
    for p in pool.iter().chain(DEMONSTRATIVES) {
        let tokens = words(&[p]);
        if !keys.contains(&key(&tokens)) {
            return (
                Surface {
                    tokens,
                    is_pronoun: true,
                    name: false,
                },
                OLD,
            );
        }
    }
    unreachable!("a sentence holds at most {MAX_MENTIONS_PER_SENTENCE} mentions")
}

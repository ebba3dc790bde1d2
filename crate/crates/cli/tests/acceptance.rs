//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 8`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use infostat::context::{build_pseudo_sentence, compute_overlap, ContextConfig, Overlap, TokenRole};
use infostat::corpus::{gen_synthetic, split_kfold, Corpus, Document, Mention, Sentence, SyntheticConfig, PRONOUNS};
use infostat::eval::{randomization_test, score_indices, CvResult};
use infostat::model::{ModelConfig, ModelParams, Profile};
use infostat::pipeline::{cross_validate_encoder, Settings, TrainedModel};
use infostat::probe::{probe_model, Grouping, EXCLUDED_TOKENS};
use infostat::tokenizer::EncodedInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (usize, &'a str, Box<dyn FnMut(&mut Experiment) -> Outcome>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

fn random_input(rng: &mut ChaCha8Rng, vocab: usize, width: usize, interior_masks: bool) -> EncodedInput {
    let n = rng.gen_range(1..=width);
    let mut ids = vec![0u32; width];
    let mut segment_ids = vec![0u8; width];
    let mut attention_mask = vec![0u8; width];
    let split = rng.gen_range(1..=n);
    for p in 0..n {
        ids[p] = if p == 0 { 2 } else { rng.gen_range(4..vocab as u32) };
        segment_ids[p] = u8::from(p >= split);
        attention_mask[p] = 1;
    }
    if interior_masks && n > 2 {
        for m in attention_mask[1..n - 1].iter_mut() {
            if rng.gen_bool(0.25) {
                *m = 0;
            }
        }
    }
    EncodedInput { ids, segment_ids, attention_mask, length: n }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        hidden: 8,
        ff: 16,
        max_positions: 16,
        vocab_size: 50,
        n_classes: 4,
        dropout: 0.0,
        seed: 11,
    };
    let p = ModelParams::<f64>::init_with_std(&config, 0.3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let inputs: Vec<EncodedInput> = (0..4).map(|_| random_input(&mut rng, 50, 16, false)).collect();
    let batch: Vec<(&EncodedInput, usize)> = inputs.iter().enumerate().map(|(i, x)| (x, i % 4)).collect();
    let loss = |q: &ModelParams<f64>| q.loss_and_grad(&batch, None).unwrap().0;
    let (_, grad) = p.loss_and_grad(&batch, None).map_err(|e| e.to_string())?;
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let idx = rng.gen_range(0..p.len());
        let mut plus = p.clone();
        plus.data[idx] += h;
        let mut minus = p.clone();
        minus.data[idx] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let scale = grad[idx].abs().max(numeric.abs());
        let rel = if scale < 1e-9 { 0.0 } else { (grad[idx] - numeric).abs() / scale };
        ensure(rel < 1e-4, format!("parameter {idx}: analytic {} vs numeric {numeric}", grad[idx]))?;
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:.1?}"))?;
    Ok(format!("100 probes, worst relative error {worst:.2e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut rows = 0usize;
    let mut worst = 0.0f64;
    for run in 0..1000 {
        let heads = [1, 2, 4][run % 3];
        let config = ModelConfig {
            layers: 1 + run % 2,
            heads,
            hidden: 8 * heads,
            ff: 16,
            max_positions: 24,
            vocab_size: 40,
            n_classes: 8,
            dropout: 0.1,
            seed: run as u64,
        };
        let p = ModelParams::<f32>::init_with_std(&config, 0.5).map_err(|e| e.to_string())?;
        let width = rng.gen_range(1..=24);
        let input = random_input(&mut rng, 40, width, true);
        let trace = p.forward(&input, None).map_err(|e| e.to_string())?;
        for layer in &trace.attentions {
            for head in layer {
                for i in 0..width {
                    let mut sum = 0.0f64;
                    for j in 0..width {
                        let w = head.get(i, j);
                        if input.attention_mask[j] == 0 {
                            ensure(w == 0.0, format!("run {run}: masked key {j} has weight {w}"))?;
                        } else {
                            sum += w as f64;
                        }
                    }
                    // Rows for positions past the real length are not computed.
                    if i < head.len {
                        worst = worst.max((sum - 1.0).abs());
                        ensure((sum - 1.0).abs() <= 1e-6, format!("run {run}: row {i} sums to {sum}"))?;
                        rows += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{rows} rows over 1000 forwards, worst |sum - 1| = {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

const WORDS: &[&str] = &["a", "The", "the", "cat", "Cat", "dog", "of", "she", "It", "price", "Bank", "bank"];

fn random_document(rng: &mut ChaCha8Rng, id: usize, max_len: usize) -> Document {
    let n_sent = rng.gen_range(1..7);
    let mut counter = 0;
    let sentences = (0..n_sent)
        .map(|index| {
            let len = rng.gen_range(1..=max_len);
            let tokens: Vec<String> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
            let mut spans = HashSet::new();
            let mentions = (0..rng.gen_range(0..5))
                .filter_map(|_| {
                    let start = rng.gen_range(0..len);
                    let end = rng.gen_range(start + 1..=len.min(start + 4));
                    spans.insert((start, end)).then(|| {
                        counter += 1;
                        Mention {
                            mention_id: format!("d{id}m{counter}"),
                            start,
                            end,
                            head: rng.gen_range(start..end),
                            is_pronoun: rng.gen_bool(0.2),
                            label: "new".into(),
                        }
                    })
                })
                .collect();
            Sentence { index, tokens, mentions }
        })
        .collect();
    Document { doc_id: format!("d{id}"), sentences }
}

/// Every earlier (sentence, mention) pair, compared case-insensitively.
fn brute_force_overlap(doc: &Document, s: usize, m: &Mention) -> (Overlap, Overlap) {
    if m.is_pronoun {
        return (Overlap::NotApplicable, Overlap::NotApplicable);
    }
    let low = |v: &[String]| v.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>();
    let sent = &doc.sentences[s];
    let span = low(&sent.tokens[m.start..m.end]);
    let head = sent.tokens[m.head].to_lowercase();
    let mut hits = (false, false);
    for e in &doc.sentences[..s] {
        for o in &e.mentions {
            hits.0 |= low(&e.tokens[o.start..o.end]) == span;
            hits.1 |= e.tokens[o.head].to_lowercase() == head;
        }
    }
    let v = |b: bool| if b { Overlap::Yes } else { Overlap::No };
    (v(hits.0), v(hits.1))
}

fn overlap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut checked, mut yes, mut na, mut id) = (0usize, 0usize, 0usize, 0usize);
    while checked < 10_000 {
        let doc = random_document(&mut rng, id, 8);
        id += 1;
        for (s, sent) in doc.sentences.iter().enumerate() {
            for m in &sent.mentions {
                let got = compute_overlap(m, &doc).map_err(|e| e.to_string())?;
                let want = brute_force_overlap(&doc, s, m);
                ensure(
                    (got.string_overlap, got.head_overlap) == want,
                    format!("{}: got {got:?}, want {want:?}", m.mention_id),
                )?;
                yes += usize::from(want.0 == Overlap::Yes);
                na += usize::from(want.0 == Overlap::NotApplicable);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} mentions ({yes} string hits, {na} pronouns → NA)"))
}

// ---------------------------------------------------------------- 4

/// Expected tokens built directly from the layout; `None` when the
/// fixed parts alone exceed the budget.
fn expected_pseudo(doc: &Document, s: usize, m: &Mention, c: &ContextConfig) -> Option<Vec<String>> {
    let sent = &doc.sentences[s];
    let mut head = vec!["[CLS]".to_string()];
    if c.include_overlap {
        let (a, b) = brute_force_overlap(doc, s, m);
        head.push(format!("pre_overlap1={a}"));
        head.push(format!("pre_overlap2={b}"));
    }
    let mut context: Vec<String> = doc.sentences[s.saturating_sub(c.extra_prev_sentences)..s]
        .iter()
        .flat_map(|e| e.tokens.iter().cloned())
        .collect();
    if c.include_local_context {
        context.extend(sent.tokens.iter().cloned());
    }
    let mut tail = vec!["[SEP]".to_string()];
    if c.include_mention {
        tail.extend(sent.tokens[m.start..m.end].iter().cloned());
    }
    tail.push("[SEP]".to_string());
    let fixed = head.len() + tail.len();
    if fixed > c.max_tokens {
        return None;
    }
    context.truncate(c.max_tokens - fixed);
    Some(head.into_iter().chain(context).chain(tail).collect())
}

fn pseudo_sentence_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut checked, mut truncated, mut budget) = (0usize, 0usize, 0usize);
    for id in 0..3000 {
        let doc = random_document(&mut rng, id, 40);
        let (mention, local, overlap) = (rng.gen_bool(0.8), rng.gen_bool(0.8), rng.gen_bool(0.8));
        if !(mention || local || overlap) {
            continue;
        }
        let config = ContextConfig {
            include_mention: mention,
            include_local_context: local,
            include_overlap: overlap,
            extra_prev_sentences: rng.gen_range(0..3),
            max_tokens: rng.gen_range(6..64),
            ..ContextConfig::default()
        };
        let unlimited = ContextConfig { max_tokens: usize::MAX, ..config.clone() };
        for (s, sent) in doc.sentences.iter().enumerate() {
            for m in &sent.mentions {
                let want = expected_pseudo(&doc, s, m, &config);
                let got = build_pseudo_sentence(m, &doc, &config);
                let Some(want) = want else {
                    ensure(
                        matches!(&got, Err(infostat::Error::Budget(_))),
                        format!("{}: expected a budget error, got {got:?}", m.mention_id),
                    )?;
                    budget += 1;
                    continue;
                };
                let ps = got.map_err(|e| format!("{}: {e}", m.mention_id))?;
                ensure(ps.tokens == want, format!("{}: {:?} != {:?}", m.mention_id, ps.tokens, want))?;
                ensure(ps.len() <= config.max_tokens, "over budget")?;
                // Five parts in order, segment 1 exactly after the first [SEP].
                let sep = ps.tokens.iter().position(|t| t == "[SEP]").unwrap();
                for (i, (role, seg)) in ps.roles.iter().zip(&ps.segment_ids).enumerate() {
                    ensure(*seg == u8::from(i > sep), format!("{}: segment of token {i}", m.mention_id))?;
                    let part = match role {
                        TokenRole::Cls => 0,
                        TokenRole::Overlap => 1,
                        TokenRole::Previous | TokenRole::Local => 2,
                        TokenRole::Sep if i == sep => 3,
                        TokenRole::Mention => 4,
                        TokenRole::Sep => 5,
                    };
                    let expected_part = if i == 0 {
                        0
                    } else if i <= 2 && overlap {
                        1
                    } else if i < sep {
                        2
                    } else if i == sep {
                        3
                    } else if i + 1 < ps.len() {
                        4
                    } else {
                        5
                    };
                    ensure(part == expected_part, format!("{}: token {i} in part {part}", m.mention_id))?;
                }
                // Anything removed by the budget is context, cut from the end.
                let full = build_pseudo_sentence(m, &doc, &unlimited).map_err(|e| e.to_string())?;
                if full.len() > ps.len() {
                    truncated += 1;
                    let kept: Vec<_> = full.tokens.iter().zip(&full.roles).filter(|(_, r)| !r.is_context()).collect();
                    let now: Vec<_> = ps.tokens.iter().zip(&ps.roles).filter(|(_, r)| !r.is_context()).collect();
                    ensure(kept == now, format!("{}: truncation touched a fixed part", m.mention_id))?;
                    if config.extra_prev_sentences == 0 {
                        let removed = full.roles.iter().filter(|r| **r == TokenRole::Local).count()
                            - ps.roles.iter().filter(|r| **r == TokenRole::Local).count();
                        ensure(removed == full.len() - ps.len(), "non-local token removed")?;
                    }
                }
                checked += 1;
            }
        }
    }
    ensure(truncated > 100 && budget > 0, format!("fuzz coverage too thin: {truncated} truncated, {budget} budget"))?;
    Ok(format!("{checked} pseudo sentences ({truncated} truncated), {budget} budget errors"))
}

// ---------------------------------------------------------------- 5, 6, 7

struct Experiment {
    corpus: Corpus,
    settings: Settings,
    full: Option<(CvResult, Duration)>,
}

impl Experiment {
    fn new() -> Self {
        let corpus = gen_synthetic(&SyntheticConfig::default(), 0).expect("synthetic corpus");
        let settings = Settings { train: Profile::Desk.train_config(), ..Settings::default() };
        Self { corpus, settings, full: None }
    }

    fn full(&mut self) -> &(CvResult, Duration) {
        if self.full.is_none() {
            let start = Instant::now();
            let r = cross_validate_encoder(&self.corpus, &self.settings, 10, 0).expect("full CV");
            self.full = Some((r, start.elapsed()));
        }
        self.full.as_ref().unwrap()
    }
}

fn learnability(exp: &mut Experiment) -> Outcome {
    let mentions = exp.corpus.mention_count();
    let (r, elapsed) = exp.full();
    let acc = r.pooled.accuracy;
    ensure((1300..=1700).contains(&mentions), format!("{mentions} mentions"))?;
    ensure(acc >= 0.90, format!("pooled accuracy {acc:.4} < 0.90"))?;
    ensure(*elapsed < Duration::from_secs(15 * 60), format!("CV took {elapsed:.0?}"))?;
    Ok(format!("50 docs / {mentions} mentions, pooled accuracy {acc:.4}, 10-fold CV in {:.0}s", elapsed.as_secs_f64()))
}

fn ablation_direction(exp: &mut Experiment) -> Outcome {
    let mut repeated = HashSet::new();
    for doc in &exp.corpus.documents {
        for (_, m) in doc.mentions() {
            let o = compute_overlap(m, doc).map_err(|e| e.to_string())?;
            if m.label == "old" && !m.is_pronoun && o.string_overlap == Overlap::Yes {
                repeated.insert(m.mention_id.clone());
            }
        }
    }
    let mut settings = exp.settings.clone();
    settings.context.include_overlap = false;
    let ablated = cross_validate_encoder(&exp.corpus, &settings, 10, 0).map_err(|e| e.to_string())?;
    let subset_acc = |r: &CvResult| {
        let hits = r.records.iter().filter(|x| repeated.contains(&x.mention_id) && x.gold == x.predicted).count();
        hits as f64 / repeated.len() as f64
    };
    let (full, _) = exp.full();
    let (a, b) = (subset_acc(full), subset_acc(&ablated));
    let drop = 100.0 * (a - b);
    ensure(!repeated.is_empty(), "no old-by-repetition mentions")?;
    ensure(drop >= 2.0, format!("full {:.1}% vs wo-overlap {:.1}%: drop {drop:.1} points", 100.0 * a, 100.0 * b))?;
    Ok(format!(
        "{} old-by-repetition mentions: full {:.1}%, wo-overlap {:.1}% (-{drop:.1} points); overall {:.4} vs {:.4}",
        repeated.len(),
        100.0 * a,
        100.0 * b,
        full.pooled.accuracy,
        ablated.pooled.accuracy
    ))
}

fn probe_fidelity(exp: &mut Experiment) -> Outcome {
    let folds = split_kfold(&exp.corpus, 10, 0).map_err(|e| e.to_string())?;
    let train = exp.corpus.subset(&folds[0].train);
    let test = exp.corpus.subset(&folds[0].test);
    let (model, _) = TrainedModel::fit(&train, &exp.settings.for_fold(0)).map_err(|e| e.to_string())?;
    let summary = probe_model(&model, &test, 10, Grouping::Gold).map_err(|e| e.to_string())?;
    for class in &summary.classes {
        for (tok, _) in &class.top {
            ensure(!EXCLUDED_TOKENS.contains(&tok.as_str()), format!("{tok} reported for {}", class.label))?;
        }
    }
    // Cue words the generator uses for each class; old also repeats
    // earlier strings, which the overlap tokens flag.
    let old_cues: Vec<String> =
        PRONOUNS.iter().map(|s| s.to_string()).chain(["pre_overlap1=yes".into(), "pre_overlap1=NA".into()]).collect();
    let cues: [(&str, Vec<String>); 3] = [
        ("new", vec!["a".into(), "an".into()]),
        ("old", old_cues),
        ("m/comparative", ["other", "another", "more", "further"].map(String::from).to_vec()),
    ];
    let mut found = BTreeMap::new();
    for (label, words) in &cues {
        let class = summary.class(label).ok_or(format!("no class {label}"))?;
        let hit: Vec<&str> = class
            .top
            .iter()
            .map(|(t, _)| t.as_str())
            .filter(|t| words.iter().any(|w| w.eq_ignore_ascii_case(t)))
            .collect();
        found.insert(*label, hit);
    }
    let report = found.iter().map(|(l, h)| format!("{l}: {}", h.join("/"))).collect::<Vec<_>>().join("; ");
    let missing: Vec<&str> = found.iter().filter(|(_, h)| h.is_empty()).map(|(l, _)| *l).collect();
    ensure(missing.is_empty(), format!("no cue in top-10 for {missing:?} ({report})"))?;
    Ok(format!("cues in top-10: {report}; excluded tokens absent"))
}

// ---------------------------------------------------------------- 8

fn significance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let gold: Vec<usize> = (0..200).map(|_| rng.gen_range(0..8)).collect();
    let preds: Vec<usize> = gold.iter().map(|&g| if rng.gen_bool(0.7) { g } else { (g + 3) % 8 }).collect();
    let same = randomization_test(&preds, &preds, &gold, 10_000, 1).map_err(|e| e.to_string())?;
    ensure(same == 1.0, format!("identical predictions gave p = {same}"))?;
    let gold: Vec<usize> = (0..20).map(|i| i % 8).collect();
    let wrong: Vec<usize> = gold.iter().map(|g| (g + 1) % 8).collect();
    let p = randomization_test(&gold, &wrong, &gold, 10_000, 1).map_err(|e| e.to_string())?;
    ensure(p <= 0.01, format!("all-correct vs all-wrong gave p = {p}"))?;
    Ok(format!("identical p = {same}, all-correct vs all-wrong (n=20, R=10,000) p = {p:.5}"))
}

// ---------------------------------------------------------------- 9

fn infostat(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_infostat"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IS_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("infostat {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let small = [
        "--profile", "custom", "--epochs", "2", "--layers", "1", "--heads", "2", "--hidden", "16", "--ff", "32",
        "--folds", "3", "--rounds", "500", "--seed", "4",
    ];
    infostat(&["gen-synthetic", "--docs", "6", "--sentences", "5", "--seed", "3", "--out", "gen"], dir)?;
    let corpus = dir.join("gen/corpus.jsonl").to_string_lossy().into_owned();
    let checkpoint = dir.join("train/model.ckpt").to_string_lossy().into_owned();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("build-vocab", vec!["--fold", "1"]),
        ("train", vec!["--fold", "1"]),
        ("cross-validate", vec![]),
        ("ablate", vec![]),
        ("probe", vec!["--checkpoint", checkpoint.as_str()]),
    ];
    let mut checked = vec!["gen".to_string()];
    for (cmd, extra) in &runs {
        let mut args = vec![*cmd, "--corpus", corpus.as_str(), "--out", cmd];
        args.extend(small);
        args.extend(extra.iter().copied());
        infostat(&args, dir)?;
        checked.push(cmd.to_string());
    }
    let mut files = 0;
    for name in &checked {
        let out = dir.join(name);
        let before = snapshot(&out);
        infostat(&["run", &out.join("manifest.toml").to_string_lossy()], dir)?;
        let after = snapshot(&out);
        ensure(before.keys().eq(after.keys()), format!("{name}: file set changed"))?;
        for (file, bytes) in &before {
            ensure(after[file] == *bytes, format!("{name}/{file} differs on rerun"))?;
        }
        let elsewhere = dir.join(format!("{name}-again"));
        infostat(&["run", &out.join("manifest.toml").to_string_lossy(), "--out", &elsewhere.to_string_lossy()], dir)?;
        let moved = snapshot(&elsewhere);
        for (file, bytes) in before.iter().filter(|(f, _)| f.as_str() != "manifest.toml") {
            ensure(moved.get(file) == Some(bytes), format!("{name}/{file} differs when replayed elsewhere"))?;
        }
        files += before.len();
    }
    Ok(format!("{} commands rerun from their manifests, {files} files byte-identical", checked.len()))
}

// ---------------------------------------------------------------- 10

fn metrics_dual_path() -> Outcome {
    let labels: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for set in 0..1000 {
        let n = rng.gen_range(0..120);
        let k = rng.gen_range(1..=8);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> =
            gold.iter().map(|&g| if rng.gen_bool(0.6) { g } else { rng.gen_range(0..k) }).collect();
        let m = score_indices(&pred, &gold, &labels).map_err(|e| e.to_string())?;
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for (&p, &g) in pred.iter().zip(&gold) {
            *counts.entry((p, g)).or_default() += 1;
        }
        for (c, cm) in m.classes.iter().enumerate() {
            let tp = counts.get(&(c, c)).copied().unwrap_or(0);
            let predicted: usize = pred.iter().filter(|&&p| p == c).count();
            let support: usize = gold.iter().filter(|&&g| g == c).count();
            let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let r = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            ensure(
                (cm.precision, cm.recall, cm.f1) == (p, r, f),
                format!("set {set}, class {c}: {:?} vs {:?}", (cm.precision, cm.recall, cm.f1), (p, r, f)),
            )?;
        }
    }
    Ok("1000 random prediction sets, all classes exact".into())
}

// ----------------------------------------------------------------

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut exp = Experiment::new();
    let criteria: Vec<Criterion> = vec![
        (1, "gradient correctness", Box::new(|_| gradient_check())),
        (2, "attention normalization", Box::new(|_| attention_normalization())),
        (3, "overlap-feature oracle", Box::new(|_| overlap_oracle())),
        (4, "pseudo-sentence contract", Box::new(|_| pseudo_sentence_contract())),
        (5, "end-to-end learnability", Box::new(learnability)),
        (6, "ablation direction", Box::new(ablation_direction)),
        (7, "probe fidelity", Box::new(probe_fidelity)),
        (8, "significance machinery", Box::new(|_| significance())),
        (9, "reproducibility", Box::new(|_| reproducibility())),
        (10, "metrics dual-path", Box::new(|_| metrics_dual_path())),
    ];
    // Failures are reported on the criterion line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, mut run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut exp)))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

use std::collections::{BTreeMap, HashMap};

use infostat::corpus::{gen_synthetic, Corpus, LabelScheme, SyntheticConfig};
use infostat::eval::{cross_validate, randomization_test, score, score_indices, FoldRun, Learner};
use infostat::model::TrainConfig;
use infostat::pipeline::{cross_validate_encoder, Settings};
use infostat::probe::aggregate_attention;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Predicts the most frequent gold label of the test fold (ties: lowest index).
struct MajorityStub;

impl Learner for MajorityStub {
    fn run_fold(&self, _fold: usize, _train: &Corpus, test: &Corpus) -> infostat::Result<FoldRun> {
        let mut counts = vec![0usize; test.scheme.len()];
        for d in &test.documents {
            for (_, m) in d.mentions() {
                counts[test.scheme.index_of(&m.label).unwrap()] += 1;
            }
        }
        let best = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
        Ok(FoldRun { predictions: vec![best; test.mention_count()], log: None })
    }
}

fn corpus(docs: usize, seed: u64) -> Corpus {
    gen_synthetic(&SyntheticConfig::small(docs, 6), seed).unwrap()
}

#[test]
fn majority_stub_matches_recount() {
    let c = corpus(23, 4);
    let result = cross_validate(&c, &MajorityStub, 5, 9).unwrap();
    let mut expected_correct = 0usize;
    for fold in &result.folds {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for id in &fold.test_docs {
            for (_, m) in c.document(id).unwrap().mentions() {
                *counts.entry(m.label.as_str()).or_default() += 1;
            }
        }
        expected_correct += counts.values().max().unwrap();
    }
    let expected = expected_correct as f64 / c.mention_count() as f64;
    assert!((result.pooled.accuracy - expected).abs() < 1e-12);
}

#[test]
fn every_document_is_tested_once_and_records_recount() {
    let c = corpus(17, 1);
    let result = cross_validate(&c, &MajorityStub, 4, 3).unwrap();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for fold in &result.folds {
        for d in &fold.test_docs {
            *seen.entry(d.as_str()).or_default() += 1;
        }
    }
    assert_eq!(seen.len(), c.documents.len());
    assert!(seen.values().all(|&n| n == 1));
    assert_eq!(result.records.len(), c.mention_count());
    assert_eq!(result.pooled.total, c.mention_count());
    let correct = result.records.iter().filter(|r| r.gold == r.predicted).count();
    assert_eq!(result.pooled.accuracy, correct as f64 / result.records.len() as f64);
    // Each record's fold matches the fold that tested its document.
    for r in &result.records {
        assert!(result.folds[r.fold].test_docs.contains(&r.doc_id));
    }
}

#[test]
fn two_documents_two_folds_with_the_encoder() {
    let c = corpus(2, 8);
    let mut settings = Settings::default();
    settings.model.hidden = 16;
    settings.model.ff = 32;
    settings.model.heads = 2;
    settings.model.layers = 1;
    settings.train = TrainConfig { epochs: 1, ..Default::default() };
    let result = cross_validate_encoder(&c, &settings, 2, 0).unwrap();
    assert_eq!(result.folds.len(), 2);
    assert!(result.folds.iter().all(|f| f.log.as_ref().unwrap().epochs.len() == 1));
    assert_eq!(result.records.len(), c.mention_count());
    let json = result.records_jsonl();
    assert_eq!(json.lines().count(), c.mention_count());
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..classes)).collect()
}

/// P/R/F from the raw pairs, without a confusion matrix.
fn pairwise_prf(preds: &[usize], golds: &[usize], class: usize) -> (f64, f64, f64) {
    let tp = preds.iter().zip(golds).filter(|(p, g)| **p == class && **g == class).count();
    let predicted = preds.iter().filter(|p| **p == class).count();
    let gold = golds.iter().filter(|g| **g == class).count();
    let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[test]
fn confusion_and_pair_paths_agree_exactly() {
    let labels: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..300 {
        let n = rng.gen_range(0..60);
        let classes = rng.gen_range(1..=8);
        let golds = random_labels(&mut rng, n, classes);
        let preds = random_labels(&mut rng, n, classes);
        let m = score_indices(&preds, &golds, &labels).unwrap();
        for (i, c) in m.classes.iter().enumerate() {
            assert_eq!((c.precision, c.recall, c.f1), pairwise_prf(&preds, &golds, i));
            assert_eq!(m.confusion[i].iter().sum::<usize>(), c.support);
        }
        let correct = preds.iter().zip(&golds).filter(|(a, b)| a == b).count();
        let acc = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
        assert_eq!(m.accuracy, acc);
    }
}

#[test]
fn randomization_is_stable_across_seeds() {
    // Two systems with 85% and 82% accuracy on 1,500 items.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1500;
    let gold: Vec<usize> = random_labels(&mut rng, n, 8);
    let noisy = |rng: &mut ChaCha8Rng, rate: f64| -> Vec<usize> {
        gold.iter().map(|&g| if rng.gen::<f64>() < rate { g } else { (g + 1) % 8 }).collect()
    };
    let a = noisy(&mut rng, 0.85);
    let b = noisy(&mut rng, 0.82);
    let p1 = randomization_test(&a, &b, &gold, 10_000, 1).unwrap();
    let p2 = randomization_test(&a, &b, &gold, 10_000, 2).unwrap();
    assert!((p1 - p2).abs() < 0.01, "{p1} vs {p2}");
    assert_eq!(p1, randomization_test(&a, &b, &gold, 10_000, 1).unwrap());
}

#[test]
fn string_scoring_respects_scheme_order() {
    let scheme = LabelScheme::new("s", vec!["x".into(), "y".into()]).unwrap();
    let m = score(&["y", "y"], &["x", "y"], &scheme).unwrap();
    assert_eq!(m.confusion, vec![vec![0, 1], vec![0, 1]]);
    assert!(m.to_table().contains("acc"));
}

proptest! {
    #[test]
    fn p_value_is_in_unit_interval_and_symmetric(
        seed in any::<u64>(),
        n in 1usize..40,
        rounds in 1usize..300,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = random_labels(&mut rng, n, 3);
        let a = random_labels(&mut rng, n, 3);
        let b = random_labels(&mut rng, n, 3);
        let p = randomization_test(&a, &b, &gold, rounds, seed).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(p, randomization_test(&b, &a, &gold, rounds, seed).unwrap());
    }

    #[test]
    fn aggregation_conserves_class_mass(
        rows in prop::collection::vec(
            (0usize..3, prop::collection::btree_map(prop::sample::select(vec!["a", "an", "it", "[SEP]", ".", ",", "x"]), 0.0f64..5.0, 0..6)),
            1..20,
        ),
    ) {
        let labels: Vec<String> = ["old", "new", "m/bridging"].iter().map(|s| s.to_string()).collect();
        let maps: Vec<(String, BTreeMap<String, f64>)> = rows
            .iter()
            .map(|(c, m)| (labels[*c].clone(), m.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
            .collect();
        let summary = aggregate_attention(maps.iter().map(|(l, m)| (l.as_str(), m)), &labels, 10);
        for class in &summary.classes {
            let direct: f64 = maps
                .iter()
                .filter(|(l, _)| *l == class.label)
                .flat_map(|(_, m)| m.iter())
                .filter(|(k, _)| !["[CLS]", "[SEP]", ",", "."].contains(&k.as_str()))
                .map(|(_, v)| v)
                .sum();
            let total: f64 = class.scores.values().sum();
            prop_assert!((direct - total).abs() < 1e-9);
            for w in class.top.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
            for (tok, s) in &class.top {
                prop_assert!(!summary.excluded.contains(tok));
                prop_assert!(*s >= 0.0);
            }
        }
    }
}

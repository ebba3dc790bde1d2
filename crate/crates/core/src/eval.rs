//! Scoring, document-level cross-validation and paired significance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_kfold, Corpus, LabelScheme};
use crate::error::{Error, Result};
use crate::model::TrainLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: usize,
    /// Set when the class has no gold instances; P/R/F are then 0.
    pub zero_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Rows are gold labels, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

/// Precision, recall and F1 from raw counts; 0 where undefined.
pub fn prf(tp: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

impl Metrics {
    /// Derives every figure from a confusion matrix.
    pub fn from_confusion(labels: &[String], confusion: Vec<Vec<usize>>) -> Result<Self> {
        let n = labels.len();
        if confusion.len() != n || confusion.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("confusion matrix is not {n}x{n}")));
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
        let classes = (0..n)
            .map(|i| {
                let gold: usize = confusion[i].iter().sum();
                let predicted: usize = confusion.iter().map(|r| r[i]).sum();
                let (precision, recall, f1) = prf(confusion[i][i], predicted, gold);
                ClassMetrics {
                    label: labels[i].clone(),
                    precision,
                    recall,
                    f1,
                    support: gold,
                    zero_support: gold == 0,
                }
            })
            .collect();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Ok(Self { classes, accuracy, confusion, total })
    }

    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Aligned table: recall, precision and F1 per class (percent), then accuracy.
    pub fn to_table(&self) -> String {
        let width = self.classes.iter().map(|c| c.label.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<width$} {:>6} {:>6} {:>6} {:>8}\n", "IS class", "R", "P", "F", "support");
        for c in &self.classes {
            let mark = if c.zero_support { " (no support)" } else { "" };
            out.push_str(&format!(
                "{:<width$} {:>6.1} {:>6.1} {:>6.1} {:>8}{mark}\n",
                c.label,
                100.0 * c.recall,
                100.0 * c.precision,
                100.0 * c.f1,
                c.support
            ));
        }
        out.push_str(&format!("{:<width$} {:>20.1} {:>8}\n", "acc", 100.0 * self.accuracy, self.total));
        out
    }
}

/// Scores label-index predictions against gold indices.
pub fn score_indices(preds: &[usize], golds: &[usize], labels: &[String]) -> Result<Metrics> {
    if preds.len() != golds.len() {
        return Err(Error::Invariant(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let n = labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= n || g >= n {
            return Err(Error::Invariant(format!("label index {} outside scheme", p.max(g))));
        }
        confusion[g][p] += 1;
    }
    Metrics::from_confusion(labels, confusion)
}

/// Scores label strings under `scheme`.
pub fn score<S: AsRef<str>>(preds: &[S], golds: &[S], scheme: &LabelScheme) -> Result<Metrics> {
    let index = |l: &S| {
        scheme
            .index_of(l.as_ref())
            .ok_or_else(|| Error::Invariant(format!("unknown label {:?}", l.as_ref())))
    };
    let p = preds.iter().map(index).collect::<Result<Vec<_>>>()?;
    let g = golds.iter().map(index).collect::<Result<Vec<_>>>()?;
    score_indices(&p, &g, scheme.labels())
}

// ---------------------------------------------------------------------------
// Significance

/// Paired approximate randomization on accuracy. Each round swaps every
/// aligned pair with probability 1/2; the p-value is add-one smoothed.
pub fn randomization_test<T: PartialEq>(a: &[T], b: &[T], gold: &[T], rounds: usize, seed: u64) -> Result<f64> {
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(Error::Invariant(format!(
            "randomization test needs aligned lists, got {}, {} and {}",
            a.len(),
            b.len(),
            gold.len()
        )));
    }
    if rounds == 0 {
        return Err(Error::Config("randomization test needs at least one round".into()));
    }
    // Accuracy difference in units of 1/n: sum of (correct_a - correct_b).
    let diffs: Vec<i64> = a
        .iter()
        .zip(b)
        .zip(gold)
        .map(|((x, y), g)| i64::from(x == g) - i64::from(y == g))
        .collect();
    let observed: i64 = diffs.iter().sum::<i64>().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..rounds {
        let mut sum = 0i64;
        let mut bits = 0u64;
        for (i, d) in diffs.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.gen();
            }
            let swap = bits & 1 == 1;
            bits >>= 1;
            sum += if swap { -d } else { *d };
        }
        if sum.abs() >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (rounds + 1) as f64)
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Predictions for one test fold, in corpus mention order.
#[derive(Debug, Clone, Default)]
pub struct FoldRun {
    pub predictions: Vec<usize>,
    pub log: Option<TrainLog>,
}

/// Anything that can be trained on one fold and predict the held-out one.
pub trait Learner: Sync {
    fn run_fold(&self, fold: usize, train: &Corpus, test: &Corpus) -> Result<FoldRun>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mention_id: String,
    pub doc_id: String,
    pub fold: usize,
    pub gold: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_docs: Vec<String>,
    pub metrics: Metrics,
    pub log: Option<TrainLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Metrics over the union of all test predictions.
    pub pooled: Metrics,
    /// Unweighted mean of per-fold accuracies.
    pub mean_fold_accuracy: f64,
    pub records: Vec<PredictionRecord>,
}

impl CvResult {
    pub fn records_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = self.pooled.to_table();
        out.push_str(&format!(
            "folds {}  mean fold acc {:.1}\n",
            self.folds.len(),
            100.0 * self.mean_fold_accuracy
        ));
        out
    }

    /// Predicted labels keyed in record order.
    pub fn predicted(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.predicted.as_str()).collect()
    }

    pub fn gold(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.gold.as_str()).collect()
    }
}

fn run_all<L: Learner>(learner: &L, corpus: &Corpus, folds: &[crate::corpus::Fold]) -> Vec<Result<FoldRun>> {
    let job = |(i, f): (usize, &crate::corpus::Fold)| {
        learner.run_fold(i, &corpus.subset(&f.train), &corpus.subset(&f.test))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        folds.par_iter().enumerate().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        folds.iter().enumerate().map(job).collect()
    }
}

/// Trains on k−1 folds and predicts the held-out one, for every fold.
pub fn cross_validate<L: Learner>(corpus: &Corpus, learner: &L, k: usize, seed: u64) -> Result<CvResult> {
    let folds = split_kfold(corpus, k, seed)?;
    let runs = run_all(learner, corpus, &folds);
    let labels = corpus.scheme.labels();
    let mut fold_results = Vec::with_capacity(k);
    let mut records = Vec::with_capacity(corpus.mention_count());
    for (i, (fold, run)) in folds.iter().zip(runs).enumerate() {
        let run = run?;
        let test = corpus.subset(&fold.test);
        let golds: Vec<usize> = test
            .documents
            .iter()
            .flat_map(|d| d.mentions().map(|(_, m)| corpus.scheme.index_of(&m.label).expect("validated label")))
            .collect();
        if run.predictions.len() != golds.len() {
            return Err(Error::Invariant(format!(
                "fold {i}: {} predictions for {} mentions",
                run.predictions.len(),
                golds.len()
            )));
        }
        let metrics = score_indices(&run.predictions, &golds, labels)?;
        let mut p = run.predictions.iter();
        for doc in &test.documents {
            for (_, m) in doc.mentions() {
                records.push(PredictionRecord {
                    mention_id: m.mention_id.clone(),
                    doc_id: doc.doc_id.clone(),
                    fold: i,
                    gold: m.label.clone(),
                    predicted: labels[*p.next().expect("length checked")].clone(),
                });
            }
        }
        fold_results.push(FoldResult { fold: i, test_docs: fold.test.clone(), metrics, log: run.log });
    }
    let preds: Vec<&str> = records.iter().map(|r| r.predicted.as_str()).collect();
    let golds: Vec<&str> = records.iter().map(|r| r.gold.as_str()).collect();
    let pooled = score(&preds, &golds, &corpus.scheme)?;
    let mean_fold_accuracy = fold_results.iter().map(|f| f.metrics.accuracy).sum::<f64>() / k as f64;
    Ok(CvResult { folds: fold_results, pooled, mean_fold_accuracy, records })
}

//! End-to-end glue: a trained model bundles its vocabulary, context
//! settings and label scheme so it can encode and label new corpora.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{build_instances, ContextConfig, PseudoSentence};
use crate::corpus::{Corpus, LabelScheme};
use crate::error::{Error, Result};
use crate::eval::{FoldRun, Learner};
use crate::model::{
    load_checkpoint, predict_logits, save_checkpoint, train_with, ModelConfig, ModelParams, TrainConfig, TrainLog,
};
use crate::tokenizer::{build_vocab, encode, EncodedInput, Vocab};

/// Everything needed to train one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub context: ContextConfig,
    /// Architecture; vocabulary size, positions and classes are filled in
    /// from the data at fit time.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab_size: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            context: ContextConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            vocab_size: 2000,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.context.validate()?;
        self.train.validate()?;
        ModelConfig { vocab_size: 1, n_classes: 1, max_positions: 1, ..self.model.clone() }.validate()
    }

    /// Same settings with every seed offset by `fold`.
    pub fn for_fold(&self, fold: usize) -> Self {
        let mut s = self.clone();
        s.model.seed = s.model.seed.wrapping_add(fold as u64);
        s.train.seed = s.train.seed.wrapping_add(fold as u64);
        s
    }
}

/// One mention prepared for the model.
#[derive(Debug, Clone)]
pub struct Instance {
    pub doc_id: String,
    pub mention_id: String,
    pub label: usize,
    pub windows: Vec<PseudoSentence>,
    pub encoded: Vec<EncodedInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams<f32>,
    pub vocab: Vocab,
    pub context: ContextConfig,
    pub scheme: LabelScheme,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    vocab: Vec<String>,
    context: ContextConfig,
    scheme_name: String,
    labels: Vec<String>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Pseudo sentences for every mention, in corpus order.
pub fn pseudo_sentences(corpus: &Corpus, context: &ContextConfig) -> Result<Vec<(String, String, Vec<PseudoSentence>)>> {
    context.validate()?;
    let mut out = Vec::with_capacity(corpus.mention_count());
    for doc in &corpus.documents {
        for (_, m) in doc.mentions() {
            out.push((doc.doc_id.clone(), m.mention_id.clone(), build_instances(m, doc, context)?));
        }
    }
    Ok(out)
}

fn encode_corpus(corpus: &Corpus, context: &ContextConfig, vocab: &Vocab, scheme: &LabelScheme) -> Result<Vec<Instance>> {
    pseudo_sentences(corpus, context)?
        .into_iter()
        .map(|(doc_id, mention_id, windows)| {
            let gold = &windows[0].gold_label;
            let label = scheme
                .index_of(gold)
                .ok_or_else(|| Error::Invariant(format!("label {gold:?} of {mention_id} not in the model's scheme")))?;
            let encoded = windows.iter().map(|w| encode(w, vocab, context.max_tokens)).collect::<Result<_>>()?;
            Ok(Instance { doc_id, mention_id, label, windows, encoded })
        })
        .collect()
}

impl TrainedModel {
    /// Learns a vocabulary from `train` only, then trains the encoder.
    pub fn fit(train: &Corpus, settings: &Settings) -> Result<(Self, TrainLog)> {
        Self::fit_with(train, settings, |_, _| {})
    }

    pub fn fit_with(
        train: &Corpus,
        settings: &Settings,
        on_epoch: impl FnMut(&crate::model::EpochLog, &ModelParams<f32>),
    ) -> Result<(Self, TrainLog)> {
        settings.validate()?;
        if train.mention_count() == 0 {
            return Err(Error::Config("training fold has no mentions".into()));
        }
        let vocab = build_vocab(train, settings.vocab_size)?;
        let instances = encode_corpus(train, &settings.context, &vocab, &train.scheme)?;
        let examples: Vec<(EncodedInput, usize)> = instances
            .into_iter()
            .flat_map(|inst| inst.encoded.into_iter().map(move |e| (e, inst.label)))
            .collect();
        let config = ModelConfig {
            vocab_size: vocab.len(),
            n_classes: train.scheme.len(),
            max_positions: settings.context.max_tokens,
            ..settings.model.clone()
        };
        let mut params = ModelParams::<f32>::init(&config)?;
        let log = train_with(&mut params, &examples, &settings.train, on_epoch)?;
        let model = Self { params, vocab, context: settings.context.clone(), scheme: train.scheme.clone() };
        Ok((model, log))
    }

    pub fn encode(&self, corpus: &Corpus) -> Result<Vec<Instance>> {
        if corpus.scheme.labels() != self.scheme.labels() {
            return Err(Error::Invariant("corpus label scheme differs from the model's".into()));
        }
        encode_corpus(corpus, &self.context, &self.vocab, &self.scheme)
    }

    /// Predicted label indices in corpus mention order.
    pub fn predict(&self, corpus: &Corpus) -> Result<Vec<usize>> {
        let instances = self.encode(corpus)?;
        self.predict_instances(&instances)
    }

    pub fn predict_instances(&self, instances: &[Instance]) -> Result<Vec<usize>> {
        let windows: Vec<Vec<EncodedInput>> = instances.iter().map(|i| i.encoded.clone()).collect();
        Ok(predict_logits(&self.params, &windows)?.iter().map(|l| crate::model::argmax(l)).collect())
    }

    pub fn checkpoint_meta(&self, extra: serde_json::Value) -> serde_json::Value {
        serde_json::to_value(Meta {
            vocab: self.vocab.tokens().to_vec(),
            context: self.context.clone(),
            scheme_name: self.scheme.name().to_string(),
            labels: self.scheme.labels().to_vec(),
            extra,
        })
        .expect("meta serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        save_checkpoint(path, &self.params, &self.checkpoint_meta(extra))
    }

    /// Loads a checkpoint, returning the model and the caller's extra metadata.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let (params, meta) = load_checkpoint(path)?;
        let meta: Meta = serde_json::from_value(meta)
            .map_err(|e| Error::Schema { line: 0, reason: format!("checkpoint metadata: {e}") })?;
        let vocab = Vocab::from_tokens(meta.vocab)?;
        let scheme = LabelScheme::new(meta.scheme_name, meta.labels)?;
        if vocab.len() != params.config().vocab_size || scheme.len() != params.config().n_classes {
            return Err(Error::Invariant("checkpoint metadata disagrees with its model config".into()));
        }
        Ok((Self { params, vocab, context: meta.context, scheme }, meta.extra))
    }
}

/// The encoder as a cross-validation learner; fold `i` uses seeds offset by `i`.
#[derive(Debug, Clone)]
pub struct EncoderLearner {
    pub settings: Settings,
}

impl Learner for EncoderLearner {
    fn run_fold(&self, fold: usize, train: &Corpus, test: &Corpus) -> Result<FoldRun> {
        let (model, log) = TrainedModel::fit(train, &self.settings.for_fold(fold))?;
        Ok(FoldRun { predictions: model.predict(test)?, log: Some(log) })
    }
}

/// Cross-validates the encoder under `settings`.
pub fn cross_validate_encoder(
    corpus: &Corpus,
    settings: &Settings,
    k: usize,
    seed: u64,
) -> Result<crate::eval::CvResult> {
    settings.validate()?;
    crate::eval::cross_validate(corpus, &EncoderLearner { settings: settings.clone() }, k, seed)
}

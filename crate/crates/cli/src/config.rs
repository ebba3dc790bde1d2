//! Experiment config: TOML sections mirroring the library configs. A
//! resolved config doubles as the run manifest.

use std::path::{Path, PathBuf};

use infostat::context::ContextConfig;
use infostat::corpus::SyntheticConfig;
use infostat::model::{ModelConfig, Profile, TrainConfig};
use infostat::pipeline::Settings;
use infostat::probe::Grouping;
use infostat::Error;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "IS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self { layers: m.layers, heads: m.heads, hidden: m.hidden, ff: m.ff, dropout: m.dropout }
    }
}

/// Training overrides; only the custom profile accepts values that
/// differ from the profile's own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub warmup_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub checkpoint: Option<PathBuf>,
    pub top_k: usize,
    pub group_by: Grouping,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self { checkpoint: None, top_k: 10, group_by: Grouping::Gold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub profile: Profile,
    pub folds: usize,
    /// Restricts train/build-vocab to a fold's training documents and
    /// probe to its test documents.
    pub fold: Option<usize>,
    pub seed: u64,
    pub vocab_size: usize,
    pub rounds: usize,
    pub context: ContextConfig,
    pub model: Architecture,
    pub train: TrainSection,
    pub probe: ProbeSection,
    pub synthetic: SyntheticConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            corpus: None,
            output_dir: PathBuf::from("out"),
            profile: Profile::Desk,
            folds: 10,
            fold: None,
            seed: 0,
            vocab_size: 2000,
            rounds: 10_000,
            context: ContextConfig::default(),
            model: Architecture::default(),
            train: TrainSection::default(),
            probe: ProbeSection::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn profile_name(p: Profile) -> String {
    serde_json::to_value(p).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills every training value from the profile, rejecting overrides a
    /// locked profile does not allow.
    pub fn resolve_train(&mut self) -> Result<TrainConfig, Error> {
        let base = self.profile.train_config();
        let t = &self.train;
        let resolved = TrainConfig {
            epochs: t.epochs.unwrap_or(base.epochs),
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            warmup_fraction: t.warmup_fraction.unwrap_or(base.warmup_fraction),
            seed: self.seed,
        };
        if self.profile != Profile::Custom {
            let locked = TrainConfig { seed: self.seed, ..base };
            if resolved != locked {
                return Err(Error::Config(format!(
                    "profile {} fixes epochs={}, lr={}, batch={}; use profile custom to change them",
                    profile_name(self.profile), locked.epochs, locked.learning_rate, locked.batch_size
                )));
            }
            if self.context.max_tokens != self.profile.max_tokens() {
                return Err(Error::Config(format!(
                    "profile {} fixes max_tokens={}",
                    profile_name(self.profile),
                    self.profile.max_tokens()
                )));
            }
        }
        self.train = TrainSection {
            epochs: Some(resolved.epochs),
            learning_rate: Some(resolved.learning_rate),
            batch_size: Some(resolved.batch_size),
            warmup_fraction: Some(resolved.warmup_fraction),
        };
        resolved.validate()?;
        Ok(resolved)
    }

    pub fn settings(&mut self) -> Result<Settings, Error> {
        let train = self.resolve_train()?;
        let m = &self.model;
        let settings = Settings {
            context: self.context.clone(),
            model: ModelConfig {
                layers: m.layers,
                heads: m.heads,
                hidden: m.hidden,
                ff: m.ff,
                dropout: m.dropout,
                seed: self.seed,
                ..ModelConfig::default()
            },
            train,
            vocab_size: self.vocab_size,
        };
        settings.validate()?;
        Ok(settings)
    }
}

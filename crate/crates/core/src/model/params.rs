//! Architecture config and the flat parameter store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale encoder.
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            hidden: 128,
            ff: 512,
            max_positions: 128,
            vocab_size: 2000,
            n_classes: 8,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("ff", self.ff),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
            ("n_classes", self.n_classes),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model {name} must be positive")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Name, shape and offset of one tensor inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub q_w: usize,
    pub q_b: usize,
    pub k_w: usize,
    pub k_b: usize,
    pub v_w: usize,
    pub v_b: usize,
    pub o_w: usize,
    pub o_b: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Offsets {
    pub token: usize,
    pub position: usize,
    pub segment: usize,
    pub layers: Vec<LayerOffsets>,
    pub cls_w: usize,
    pub cls_b: usize,
}

/// Tensor layout in declaration order.
pub fn layout(config: &ModelConfig) -> Vec<TensorSpec> {
    let d = config.hidden;
    let mut specs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>| {
        let len: usize = shape.iter().product();
        specs.push(TensorSpec { name, shape, offset });
        offset += len;
    };
    push("embeddings.token".into(), vec![config.vocab_size, d]);
    push("embeddings.position".into(), vec![config.max_positions, d]);
    push("embeddings.segment".into(), vec![2, d]);
    for l in 0..config.layers {
        let p = |s: &str| format!("layer{l}.{s}");
        for proj in ["query", "key", "value", "output"] {
            push(p(&format!("attention.{proj}.weight")), vec![d, d]);
            push(p(&format!("attention.{proj}.bias")), vec![d]);
        }
        push(p("attention.norm.scale"), vec![d]);
        push(p("attention.norm.offset"), vec![d]);
        push(p("ffn.in.weight"), vec![d, config.ff]);
        push(p("ffn.in.bias"), vec![config.ff]);
        push(p("ffn.out.weight"), vec![config.ff, d]);
        push(p("ffn.out.bias"), vec![d]);
        push(p("ffn.norm.scale"), vec![d]);
        push(p("ffn.norm.offset"), vec![d]);
    }
    push("classifier.weight".into(), vec![d, config.n_classes]);
    push("classifier.bias".into(), vec![config.n_classes]);
    specs
}

fn offsets(specs: &[TensorSpec], layers: usize) -> Offsets {
    let at = |i: usize| specs[i].offset;
    let per = 16;
    let layer_offsets = (0..layers)
        .map(|l| {
            let b = 3 + l * per;
            LayerOffsets {
                q_w: at(b),
                q_b: at(b + 1),
                k_w: at(b + 2),
                k_b: at(b + 3),
                v_w: at(b + 4),
                v_b: at(b + 5),
                o_w: at(b + 6),
                o_b: at(b + 7),
                ln1_g: at(b + 8),
                ln1_b: at(b + 9),
                ff1_w: at(b + 10),
                ff1_b: at(b + 11),
                ff2_w: at(b + 12),
                ff2_b: at(b + 13),
                ln2_g: at(b + 14),
                ln2_b: at(b + 15),
            }
        })
        .collect();
    let last = 3 + layers * per;
    Offsets {
        token: at(0),
        position: at(1),
        segment: at(2),
        layers: layer_offsets,
        cls_w: at(last),
        cls_b: at(last + 1),
    }
}

/// Encoder weights stored in one flat buffer following [`layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    specs: Vec<TensorSpec>,
    pub data: Vec<T>,
}

pub const INIT_STD: f64 = 0.02;

/// Draws from N(0, std²) truncated to ±2 std.
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialization: matrices and embeddings from a truncated
    /// normal, biases zero, norm scales one.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        Self::init_with_std(config, INIT_STD)
    }

    pub fn init_with_std(config: &ModelConfig, std: f64) -> Result<Self> {
        config.validate()?;
        let specs = layout(config);
        let total = specs.last().map_or(0, |s| s.offset + s.len());
        let mut data = vec![T::zero(); total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for spec in &specs {
            let slot = &mut data[spec.range()];
            if spec.name.ends_with(".scale") {
                slot.iter_mut().for_each(|v| *v = T::one());
            } else if spec.shape.len() == 2 {
                slot.iter_mut().for_each(|v| *v = T::from_f64(truncated_normal(&mut rng, std)));
            }
        }
        Ok(Self { config: config.clone(), specs, data })
    }

    pub fn from_data(config: &ModelConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        let specs = layout(config);
        let total = specs.last().map_or(0, |s| s.offset + s.len());
        if data.len() != total {
            return Err(Error::Shape(format!(
                "expected {total} parameters, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("non-finite parameter value".into()));
        }
        Ok(Self { config: config.clone(), specs, data })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.specs.iter().find(|s| s.name == name)?.range();
        Some(&mut self.data[range])
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            specs: self.specs.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub(crate) fn offsets(&self) -> Offsets {
        offsets(&self.specs, self.config.layers)
    }
}

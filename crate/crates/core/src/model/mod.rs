//! From-scratch transformer encoder with a `[CLS]` classification head.

mod checkpoint;
mod encoder;
pub mod kernels;
mod optim;
mod params;
mod train;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, MAGIC};
pub use encoder::{real_length, AttentionMap, ForwardTrace};
pub use kernels::Real;
pub use optim::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use params::{layout, ModelConfig, ModelParams, TensorSpec, INIT_STD};
pub use train::{argmax, predict, predict_logits, scheduled_lr, train, train_with, EpochLog, Profile, TrainConfig, TrainLog};

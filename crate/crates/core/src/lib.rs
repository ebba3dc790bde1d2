//! Information-status classification over discourse-aware pseudo sentences.
//!
//! The pipeline: [`corpus`] loads or generates annotated documents,
//! [`context`] turns each mention into a pseudo sentence, [`tokenizer`]
//! learns a subword vocabulary and encodes inputs, [`model`] trains a
//! from-scratch self-attention encoder with a `[CLS]` head, [`eval`] runs
//! document-level cross-validation and significance tests, and [`probe`]
//! ranks the tokens `[CLS]` attends to per class.

pub mod context;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod probe;
pub mod tokenizer;

pub use error::{Error, Result};

//! Saliency-guided span mixup for text classification.
//!
//! The pieces, bottom-up:
//!
//! - [`corpus`]: tokenizer, vocabulary, TSV/JSONL loading and a synthetic
//!   keyword-classification generator.
//! - [`model`]: a small embedding → dense → mean-pool → linear classifier
//!   with hand-written gradients, AdamW and checkpoints.
//! - [`saliency`]: per-token gradient-norm scores.
//! - [`mixer`]: span selection, the saliency-guided mix, and the baseline
//!   and ablation variants.
//! - [`trainer`]: two-step training with the four-term mixup loss.

pub mod corpus;
pub mod error;
pub mod mixer;
pub mod model;
pub mod rng;
pub mod saliency;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};

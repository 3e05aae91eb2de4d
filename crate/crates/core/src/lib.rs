//! Toolkit for turning unordered LLM-generated pseudo glosses into
//! temporally aligned supervision for sign-language translation pipelines.
//!
//! The pieces, in pipeline order:
//!
//! - [`simulator`] — synthetic corpora with known gloss order and frame
//!   alignments, so every downstream claim can be checked against an oracle.
//! - [`llm`] — prompt construction, an LLM transport with an offline mock,
//!   and pseudo-gloss post-processing (normalization, length capping, a
//!   stop-word baseline).
//! - [`corpus`] — domain types, vocabulary construction, frequency-aware
//!   BCE weights, and on-disk persistence.
//! - [`mlc`] — the weakly supervised frame classifier: softmax over the
//!   gloss vocabulary, temporal max-pooling, weighted BCE plus a temporal
//!   smoothness penalty, analytic gradients, and an SGD loop.
//! - [`reorder`] — frame-wise gloss extraction, filter/merge, and the greedy
//!   reordering that aligns a draft gloss with video temporal structure.
//! - [`ctc`] — log-space CTC loss and gradients, greedy decoding, and a toy
//!   recognizer trained on reordered glosses.
//! - [`metrics`] — WER, BLEU, ROUGE-L, set precision/recall, Kendall
//!   distance.
//! - [`config`] — the JSON configuration file shared by all CLI stages.

pub mod config;
pub mod corpus;
pub mod ctc;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod mlc;
pub mod reorder;
pub mod simulator;

pub use error::{Error, Result};

/// Seed applied whenever a stage seed is omitted.
pub const DEFAULT_SEED: u64 = 42;

//! Multimodal in-hospital mortality modelling on synthetic ICU cohorts.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense `f64` numerics, parameter stores, optimizers and a
//!   finite-difference gradient checker.
//! - [`corpus`]: note ingestion, tokenization, number normalization, vocabulary
//!   construction and per-day document aggregation.
//! - [`entity`]: lexicon entity matching, rule-based negation scope detection
//!   and a trainable hierarchical (char-CNN / LSTM / LSTM-decoder) tagger.
//! - [`doc2vecc`]: skip-gram document embeddings trained with a corrupted
//!   document context.
//! - [`vitals`]: 48 h window, 2 h discretization, imputation, standardization
//!   and patient-grouped splits.
//! - [`models`]: peephole LSTM, concatenation LSTM and the multimodal fusion
//!   network, all with hand-written backward passes.
//! - [`pipeline`]: multi-seed protocol, metrics, bootstrap evaluation, t-SNE.
//! - [`synthgen`]: synthetic cohorts with planted signal in both modalities.

pub mod cohort;
pub mod corpus;
pub mod doc2vecc;
pub mod entity;
mod error;
pub mod models;
pub mod numkit;
pub mod pipeline;
pub mod synthgen;
pub mod vitals;

pub use error::{Error, Result};

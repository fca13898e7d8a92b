//! Fully automated extraction of numeric product attributes from free
//! text.
//!
//! The pipeline mines unit aliases from the corpus itself, generates BIO
//! training annotations by distant supervision against structured
//! attribute values, trains a multi-task CRF sequence tagger that masks
//! the loss of tasks with missing values, and scores extractions with a
//! strict exact-value credit rule.
//!
//! Modules follow the pipeline stages:
//!
//! - [`corpus`]: catalog ingestion, tokenization, train/test splitting
//! - [`embeddings`]: word-vector loading and cosine similarity
//! - [`aliasing`]: automatic alias mining and exclusive-flag computation
//! - [`annotation`]: BIO annotation under exact, canonical and auto
//!   matching regimes
//! - [`tagger`]: the shared-encoder CRF model, training and decoding
//! - [`evaluation`]: precision/recall/F1 with the exact-value credit rule
//! - [`synth`]: seeded synthetic benchmark generator with gold labels

pub mod aliasing;
pub mod annotation;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod numeric;
pub mod synth;
pub mod tagger;

pub use error::{Error, Result};

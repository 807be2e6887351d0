//! Reframing arguments toward a target connotation while keeping their
//! denotation.
//!
//! The pipeline has three stages:
//!
//! * [`rewrite`] builds pseudo-parallel data by masking emotionally loaded
//!   words and infilling substitutes whose connotation differs, and
//!   [`pairformat`] serializes the result with control codes and span
//!   demarcators;
//! * [`reframe`] fine-tunes a sequence-to-sequence generator on those pairs,
//!   samples candidates over a top-k sweep and keeps the one most entailed by
//!   the input;
//! * [`evaluate`] scores outputs by semantic similarity to the input and
//!   compares systems with paired randomization tests.
//!
//! Models sit behind the traits in [`backends`]; the mocks there make every
//! stage deterministic and testable without pretrained weights.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod lexicon;
pub mod pairformat;
pub mod parallel;
pub mod pipeline;
pub mod reframe;
pub mod rewrite;
pub mod text;

pub use error::{Error, ErrorKind, Result};

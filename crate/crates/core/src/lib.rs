//! Synthetic training data and evaluation machinery for question answering
//! over tables.
//!
//! The pipeline: ingest tables ([`table`]), sample validated SQL queries
//! ([`sampler`], executed by [`sql`]), serialize them for a question
//! generator and transcribe them ([`qg`]), drop high-perplexity questions
//! ([`lm`]), rerank a parser's top candidates with entity-linking features
//! ([`entity`], [`gbt`], [`rerank`]), and build and score topic-shift splits
//! ([`topics`], [`eval`]).

pub mod entity;
pub mod eval;
pub mod gbt;
pub mod lm;
pub mod pipe;
pub mod qg;
pub mod rerank;
pub mod rng;
pub mod sampler;
pub mod sql;
pub mod table;
pub mod topics;

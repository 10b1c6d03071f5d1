//! Embedding-inversion attack toolkit.
//!
//! Given black-box access to a sentence-embedding model `f`, the attackers in
//! this crate reconstruct information about the input text from `f(x)` alone:
//!
//! - [`geia`] — a generative attacker: a decoder-only transformer conditioned
//!   on the projected victim embedding as prefix position 0, trained with
//!   next-token cross-entropy and decoded with beam search.
//! - [`baselines`] — set-predicting baselines (multi-label classifier and
//!   multi-set prediction GRU) trained under the same budgets.
//! - [`metrics`] — multiset precision/recall/F1, stopword rate, named-entity
//!   recovery, perplexity, ROUGE/BLEU, and embedding similarity.
//! - [`leakage`] — a training-data leakage audit that compares attacker
//!   likelihoods of original vs. alternative entity spans under embeddings of
//!   masked text, with paired significance testing.
//! - [`reasoner`] — LLM-backed masking: prompt construction, response
//!   parsing into (original, masked, alternative) triples, record/replay
//!   transports.
//!
//! Supporting modules: [`corpus`] (JSONL interchange, importers, splits),
//! [`embedder`] (victim registry, toy victims, similarity, embedding cache),
//! [`textops`] (tokenizers, word tokens, stopwords, NER port), [`nn`]
//! (hand-rolled autodiff-free layers), [`synthetic`] (desk-scale corpus
//! generators) and [`runner`] (experiment orchestration + reports).
//!
//! Everything is seeded and single-threaded: a run is a pure function of
//! (config, data, seed).

pub mod baselines;
pub mod corpus;
pub mod embedder;
pub mod error;
pub mod geia;
pub mod leakage;
pub mod metrics;
pub mod nn;
pub mod reasoner;
pub mod runner;
pub mod synthetic;
pub mod textops;

pub use error::{Error, Result};
